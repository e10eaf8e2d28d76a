// SPDX-License-Identifier: Apache-2.0
//
// Dual-supervised training: BCE + Dice on both the final and coarse maps,
// AdamW over the trainable set, per-epoch checkpoints and a CSV log.
#pragma once

#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "sammese/autograd.hpp"
#include "sammese/config.hpp"
#include "sammese/data_io.hpp"
#include "sammese/model.hpp"

namespace sammese {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LossReport {
  double bce_main = 0, dice_main = 0, bce_coarse = 0, dice_coarse = 0, total = 0;

  LossReport& operator+=(const LossReport& o);
  LossReport scaled(double s) const;
  /// Name of the first non-finite term, or empty.
  std::string first_non_finite() const;
};

struct LossTerms {
  ag::Var total;
  LossReport report;
};

/// Loss of both maps ([1, 1, h, w] each) against the binary target, resized
/// nearest-neighbour to each prediction when needed.
LossTerms total_loss(const ag::Var& m_sal, const ag::Var& m_coarse, const Tensor& gt,
                     const RunConfig& cfg);

/// Decoupled weight decay Adam over a fixed parameter list.
class AdamW {
 public:
  struct Options {
    double lr = 1e-5;
    double beta1 = 0.9, beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-2;
  };

  AdamW(std::vector<ag::Var> params, Options opt);
  /// Applies one update from the accumulated gradients. Parameters without a
  /// gradient are treated as having a zero gradient.
  void step();
  int64_t steps() const { return t_; }
  const Options& options() const { return opt_; }

 private:
  std::vector<ag::Var> params_;
  std::vector<Tensor> m_, v_;
  Options opt_;
  int64_t t_ = 0;
};

AdamW::Options adam_options(const RunConfig& cfg);

struct TrainOptions {
  std::string log_csv;   // empty = no log file
  std::string ckpt;      // written after every epoch; empty = none
  std::ostream* progress = nullptr;  // per-epoch line when set
  std::function<void(int64_t step, const LossReport&)> on_step;
};

struct TrainResult {
  std::vector<LossReport> steps;   // mean over each optimiser step's batch
  std::vector<LossReport> epochs;  // mean over each epoch's steps
  int64_t step_count = 0;
};

/// Seed-deterministic sample order per epoch.
std::vector<size_t> epoch_order(size_t n, uint64_t seed, int64_t epoch);

TrainResult train(SammeseModel& model, const std::vector<PreprocessedSample>& data,
                  const TrainOptions& opt = {});

}  // namespace sammese
