#include "lvnc/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "lvnc/errors.hpp"

namespace lvnc::tensor {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : s_(std::make_shared<Storage>()) {
  if (shape.empty()) throw DimensionError("tensor shape must have at least one axis");
  for (auto e : shape) {
    if (e == 0 && shape.size() < 2) throw DimensionError("tensor extents must be positive");
  }
  if (data.size() != shape_numel(shape)) {
    throw DimensionError("tensor data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
  }
  s_->shape = std::move(shape);
  s_->data = std::move(data);
  set_requires_grad(requires_grad);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({1}, {value}, requires_grad);
}

const Shape& Tensor::shape() const { return s_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= s_->shape.size()) throw DimensionError("axis out of range for " + shape_str(s_->shape));
  return s_->shape[axis];
}

std::size_t Tensor::numel() const { return s_->data.size(); }

std::span<const double> Tensor::data() const { return s_->data; }
std::span<double> Tensor::data() { return s_->data; }

bool Tensor::requires_grad() const { return s_ && s_->requires_grad; }

void Tensor::set_requires_grad(bool on) {
  s_->requires_grad = on;
  if (on) {
    s_->grad.assign(s_->data.size(), 0.0);
  } else {
    s_->grad.clear();
    s_->grad.shrink_to_fit();
  }
}

bool Tensor::has_grad() const { return s_ && s_->grad.size() == s_->data.size(); }

std::span<double> Tensor::grad() const { return s_->grad; }

void Tensor::zero_grad() { std::fill(s_->grad.begin(), s_->grad.end(), 0.0); }

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on a tensor of shape " + shape_str(shape()));
  return s_->data[0];
}

Tensor Tensor::clone() const {
  Tensor t(s_->shape, s_->data, false);
  if (s_->requires_grad) {
    t.s_->requires_grad = true;
    t.s_->grad = s_->grad;
  }
  return t;
}

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::Conv2d: return "conv2d";
    case OpKind::Relu: return "relu";
    case OpKind::MaxPool2: return "maxpool2";
    case OpKind::Upsample2: return "upsample2";
    case OpKind::ConcatChannels: return "concat_channels";
    case OpKind::SoftmaxChannels: return "softmax_channels";
    case OpKind::Add: return "add";
    case OpKind::Scale: return "scale";
    case OpKind::Mul: return "mul";
    case OpKind::Sum: return "sum";
    case OpKind::Mean: return "mean";
    case OpKind::LovaszSoftmax: return "lovasz_softmax";
    case OpKind::BoundaryLoss: return "boundary_loss";
  }
  return "unknown";
}

void Tape::record(OpKind kind, std::vector<Tensor> inputs, Tensor& output, BackwardFn fn) {
  if (!recording_) return;
  bool needs = std::any_of(inputs.begin(), inputs.end(),
                           [](const Tensor& t) { return t.requires_grad(); });
  if (!needs) return;
  output.set_requires_grad(true);
  nodes_.push_back(Node{kind, std::move(inputs), output, std::move(fn)});
}

std::size_t Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward() needs a scalar loss");
  }
  std::size_t last = nodes_.size();
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    if (nodes_[i].output.same_storage(loss)) {
      last = i;
      break;
    }
  }
  if (last == nodes_.size()) throw ContractError("loss tensor was not produced on this tape");

  auto loss_handle = loss;
  loss_handle.grad()[0] += 1.0;
  std::size_t visited = 0;
  for (std::size_t i = last + 1; i-- > 0;) {
    nodes_[i].fn(nodes_[i].output);
    ++visited;
  }
  return visited;
}

}  // namespace lvnc::tensor
