#include "lvnc/bench.hpp"

#include <chrono>
#include <stdexcept>

#include "lvnc/errors.hpp"

namespace lvnc::eval {

TimingReport benchmark_inference(const unet::UNetParams& params, const tensor::Tensor& batch, int runs,
                                 int warmup) {
  if (runs < 1 || warmup < 0) throw ContractError("benchmark needs runs >= 1 and warmup >= 0");
  std::vector<mask::SegMask> reference;
  for (int i = 0; i < warmup; ++i) reference = unet::predict(params, batch);
  if (warmup == 0) reference = unet::predict(params, batch);

  TimingReport rep;
  rep.warmup_runs = warmup;
  rep.timed_runs = runs;
  rep.batch_size = batch.dim(0);
  rep.threads = 1;
  rep.durations_ms.reserve(static_cast<std::size_t>(runs));
  using clock = std::chrono::steady_clock;
  for (int i = 0; i < runs; ++i) {
    const auto t0 = clock::now();
    auto out = unet::predict(params, batch);
    const auto t1 = clock::now();
    rep.durations_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    if (out != reference) throw std::runtime_error("benchmark: timed run " + std::to_string(i) + " changed the output");
  }
  const auto ms = mean_std(rep.durations_ms);
  rep.mean_ms = ms.mean;
  rep.std_ms = ms.std;
  rep.per_slice_mean_ms = rep.mean_ms / static_cast<double>(rep.batch_size);
  return rep;
}

}  // namespace lvnc::eval
