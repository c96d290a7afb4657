#pragma once

// Dense float64 tensors with a recording tape for reverse-mode differentiation.
//
// A Tensor is a shared handle: copies alias the same storage, which is how
// the tape refers back to operands during the backward sweep. Use clone() for
// an independent deep copy.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace lvnc::tensor {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(s_); }
  const Shape& shape() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  std::span<double> data();

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool has_grad() const;
  // Gradient buffer is shared by every handle, so backward closures can
  // accumulate through const copies.
  std::span<double> grad() const;
  void zero_grad();

  double item() const;
  Tensor clone() const;
  bool same_storage(const Tensor& other) const { return s_ == other.s_; }

 private:
  struct Storage {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Storage> s_;
};

enum class OpKind {
  Conv2d,
  Relu,
  MaxPool2,
  Upsample2,
  ConcatChannels,
  SoftmaxChannels,
  Add,
  Scale,
  Mul,
  Sum,
  Mean,
  LovaszSoftmax,
  BoundaryLoss,
};

const char* op_name(OpKind kind);

/// Ordered record of operations for one forward pass. Nodes are appended as
/// operations run, so insertion order is already a topological order.
class Tape {
 public:
  using BackwardFn = std::function<void(const Tensor& output)>;

  Tape() = default;
  /// A non-recording tape turns every op into a plain forward evaluation.
  explicit Tape(bool recording) : recording_(recording) {}
  bool recording() const { return recording_; }

  /// Appends a node. The output is marked as requiring a gradient iff any
  /// input does; nodes with no differentiable input are not stored.
  void record(OpKind kind, std::vector<Tensor> inputs, Tensor& output, BackwardFn fn);

  /// Seeds d(loss)/d(loss) = 1 and runs every node at or before the loss
  /// node in reverse order. Gradients accumulate into existing buffers.
  /// Returns the number of nodes visited.
  std::size_t backward(const Tensor& loss);

  std::size_t size() const { return nodes_.size(); }
  OpKind kind(std::size_t i) const { return nodes_.at(i).kind; }
  void clear() { nodes_.clear(); }

 private:
  struct Node {
    OpKind kind;
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn fn;
  };
  std::vector<Node> nodes_;
  bool recording_ = true;
};

// Operations. Every op takes the tape it records on.

/// Stride-1 cross-correlation. kernel is [Cout, Cin, kh, kw] with odd kh, kw.
Tensor conv2d(Tape& tape, const Tensor& input, const Tensor& kernel, const Tensor& bias,
              int padding);
Tensor relu(Tape& tape, const Tensor& input);
/// 2x2 max pooling; ties go to the first element in row-major window order.
Tensor maxpool2(Tape& tape, const Tensor& input);
/// Nearest-neighbour 2x upsampling.
Tensor upsample2(Tape& tape, const Tensor& input);
Tensor concat_channels(Tape& tape, const Tensor& a, const Tensor& b);
Tensor softmax_channels(Tape& tape, const Tensor& input);

Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& a, double factor);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sum(Tape& tape, const Tensor& a);
Tensor mean(Tape& tape, const Tensor& a);

/// Slices channels [begin, end) out of an NCHW tensor. Not differentiable;
/// used for inspection and tests.
Tensor slice_channels(const Tensor& input, std::size_t begin, std::size_t end);

/// Central-difference gradient of a scalar function, one element at a time.
/// x is perturbed in place and restored afterwards.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, Tensor& x, double h);

}  // namespace lvnc::tensor
