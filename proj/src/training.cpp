// SPDX-License-Identifier: Apache-2.0
#include "sammese/training.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <numeric>

#include "sammese/checkpoint.hpp"
#include "sammese/rng.hpp"

namespace sammese {

LossReport& LossReport::operator+=(const LossReport& o) {
  bce_main += o.bce_main;
  dice_main += o.dice_main;
  bce_coarse += o.bce_coarse;
  dice_coarse += o.dice_coarse;
  total += o.total;
  return *this;
}

LossReport LossReport::scaled(double s) const {
  return {bce_main * s, dice_main * s, bce_coarse * s, dice_coarse * s, total * s};
}

std::string LossReport::first_non_finite() const {
  if (!std::isfinite(bce_main)) return "bce_main";
  if (!std::isfinite(dice_main)) return "dice_main";
  if (!std::isfinite(bce_coarse)) return "bce_coarse";
  if (!std::isfinite(dice_coarse)) return "dice_coarse";
  if (!std::isfinite(total)) return "total";
  return {};
}

namespace {

Tensor target_for(const ag::Var& pred, const Tensor& gt) {
  const Shape& s = pred.shape();
  if (s.size() != 4 || s[0] != 1 || s[1] != 1) {
    throw ShapeError("total_loss: prediction must be [1, 1, h, w], got " + shape_str(s));
  }
  if (gt.rank() != 2) throw ShapeError("total_loss: target must be [h, w], got " + shape_str(gt.shape()));
  if (gt.dim(0) == s[2] && gt.dim(1) == s[3]) return gt;
  return resize_nearest(gt, s[2], s[3]);
}

}  // namespace

LossTerms total_loss(const ag::Var& m_sal, const ag::Var& m_coarse, const Tensor& gt,
                     const RunConfig& cfg) {
  const Tensor g_main = target_for(m_sal, gt);
  const Tensor g_coarse = target_for(m_coarse, gt);
  const ag::Var bm = ag::bce_loss(m_sal, g_main, cfg.bce_eps);
  const ag::Var dm = ag::dice_loss(m_sal, g_main, cfg.dice_smooth);
  const ag::Var bc = ag::bce_loss(m_coarse, g_coarse, cfg.bce_eps);
  const ag::Var dc = ag::dice_loss(m_coarse, g_coarse, cfg.dice_smooth);
  LossTerms t;
  t.total = ag::add(ag::scale(ag::add(bm, dm), cfg.weight_main),
                    ag::scale(ag::add(bc, dc), cfg.weight_coarse));
  t.report = {bm.value()[0], dm.value()[0], bc.value()[0], dc.value()[0], t.total.value()[0]};
  return t;
}

AdamW::AdamW(std::vector<ag::Var> params, Options opt) : params_(std::move(params)), opt_(opt) {
  for (const auto& p : params_) {
    m_.emplace_back(p.shape());
    v_.emplace_back(p.shape());
  }
}

void AdamW::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    ag::Var p = params_[i];
    Tensor& w = p.mutable_value();
    const bool has = p.has_grad();
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    for (int64_t j = 0; j < w.numel(); ++j) {
      const double g = has ? p.grad()[j] : 0.0;
      m[j] = opt_.beta1 * m[j] + (1.0 - opt_.beta1) * g;
      v[j] = opt_.beta2 * v[j] + (1.0 - opt_.beta2) * g * g;
      const double mh = m[j] / bc1;
      const double vh = v[j] / bc2;
      w[j] -= opt_.lr * (opt_.weight_decay * w[j] + mh / (std::sqrt(vh) + opt_.eps));
    }
  }
}

AdamW::Options adam_options(const RunConfig& cfg) {
  AdamW::Options o;
  o.lr = cfg.lr;
  o.beta1 = cfg.adam_beta1;
  o.beta2 = cfg.adam_beta2;
  o.eps = cfg.adam_eps;
  o.weight_decay = cfg.weight_decay;
  return o;
}

std::vector<size_t> epoch_order(size_t n, uint64_t seed, int64_t epoch) {
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  Rng rng(Rng::derive(seed, "epoch/" + std::to_string(epoch)));
  for (size_t i = n; i > 1; --i) {
    const auto j = static_cast<size_t>(rng.below(static_cast<int64_t>(i)));
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

TrainResult train(SammeseModel& model, const std::vector<PreprocessedSample>& data,
                  const TrainOptions& opt) {
  const RunConfig& cfg = model.config();
  ParameterRegistry& reg = model.registry();
  if (reg.frozen().empty()) throw TrainingError("train: the frozen parameter set is empty");
  if (data.empty()) throw TrainingError("train: no training samples");
  for (const auto& s : data) {
    if (s.gt_large.empty()) throw TrainingError("train: sample '" + s.id + "' has no ground truth");
  }

  std::vector<ag::Var> params;
  for (const auto* e : reg.trainable()) params.push_back(e->var);
  AdamW optim(params, adam_options(cfg));

  std::ofstream log;
  if (!opt.log_csv.empty()) {
    const auto parent = std::filesystem::path(opt.log_csv).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    log.open(opt.log_csv, std::ios::trunc);
    if (!log) throw TrainingError("cannot write training log " + opt.log_csv);
    log << "epoch,step,bce_main,dice_main,bce_coarse,dice_coarse,total\n";
    log << std::setprecision(17);
  }

  TrainResult result;
  const auto batch = static_cast<size_t>(cfg.batch);
  const double inv_batch = 1.0 / static_cast<double>(cfg.batch);
  bool done = false;
  for (int64_t epoch = 0; epoch < cfg.epochs && !done; ++epoch) {
    const auto order = epoch_order(data.size(), cfg.seed, epoch);
    LossReport epoch_sum;
    int64_t epoch_steps = 0;
    for (size_t start = 0; start < order.size(); start += batch) {
      const size_t end = std::min(order.size(), start + batch);
      reg.zero_grad();
      LossReport step_sum;
      for (size_t k = start; k < end; ++k) {
        const PreprocessedSample& s = data[order[k]];
        const ForwardResult fr = model.forward(s);
        const LossTerms lt = total_loss(fr.saliency, fr.coarse, s.gt_large, cfg);
        const std::string bad = lt.report.first_non_finite();
        if (!bad.empty()) {
          throw TrainingError("non-finite loss term " + bad + " at epoch " + std::to_string(epoch) +
                              ", step " + std::to_string(result.step_count) + ", sample '" +
                              s.id + "'");
        }
        ag::backward(ag::scale(lt.total, inv_batch));
        step_sum += lt.report;
      }
      optim.step();
      const LossReport step_mean = step_sum.scaled(1.0 / static_cast<double>(end - start));
      result.steps.push_back(step_mean);
      ++result.step_count;
      epoch_sum += step_mean;
      ++epoch_steps;
      if (opt.on_step) opt.on_step(result.step_count, step_mean);
      if (cfg.max_steps > 0 && result.step_count >= cfg.max_steps) {
        done = true;
        break;
      }
    }
    reg.zero_grad();
    const LossReport em = epoch_sum.scaled(1.0 / static_cast<double>(epoch_steps));
    result.epochs.push_back(em);
    if (log) {
      log << epoch << ',' << result.step_count << ',' << em.bce_main << ',' << em.dice_main << ','
          << em.bce_coarse << ',' << em.dice_coarse << ',' << em.total << '\n';
      log.flush();
    }
    if (!opt.ckpt.empty()) save_checkpoint(opt.ckpt, reg, cfg);
    if (opt.progress) {
      char line[256];
      std::snprintf(line, sizeof line,
                    "epoch %3lld  step %5lld  bce_main %.6f  dice_main %.6f  bce_coarse %.6f  "
                    "dice_coarse %.6f  total %.6f\n",
                    static_cast<long long>(epoch), static_cast<long long>(result.step_count),
                    em.bce_main, em.dice_main, em.bce_coarse, em.dice_coarse, em.total);
      *opt.progress << line << std::flush;
    }
  }
  return result;
}

}  // namespace sammese
