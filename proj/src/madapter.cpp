// SPDX-License-Identifier: Apache-2.0
#include "sammese/madapter.hpp"

#include <cmath>

namespace sammese {

namespace {

int64_t square_side(int64_t tokens) {
  const auto side = static_cast<int64_t>(std::llround(std::sqrt(static_cast<double>(tokens))));
  if (side * side != tokens) {
    throw ShapeError("fusion_unit: token count " + std::to_string(tokens) +
                     " is not a square grid");
  }
  return side;
}

int64_t param_numel(const nn::Linear& l) {
  if (!l.weight.defined()) return 0;
  return l.weight.value().numel() + (l.bias.defined() ? l.bias.value().numel() : 0);
}

}  // namespace

AdapterParams AdapterParams::make(const nn::Builder& b, const std::string& prefix, int64_t width,
                                  int64_t bottleneck, AdapterVariant variant) {
  AdapterParams p;
  const bool uses_x = variant != AdapterVariant::adapter_fsem;
  const bool uses_sem = variant != AdapterVariant::adapter_fx;
  if (uses_x) p.down = nn::Linear::make(b, prefix + ".down", width, bottleneck);
  if (uses_sem) p.down_sem = nn::Linear::make(b, prefix + ".down_sem", width, bottleneck);
  if (variant == AdapterVariant::full) {
    p.fusion = nn::Conv2d::make(b, prefix + ".fusion", bottleneck, bottleneck, 3);
  }
  p.up = nn::Linear::make(b, prefix + ".up", bottleneck, width, Init::zeros());
  return p;
}

int64_t AdapterParams::count() const {
  int64_t n = param_numel(down) + param_numel(down_sem) + param_numel(up);
  if (fusion.weight.defined()) n += fusion.weight.value().numel() + fusion.bias.value().numel();
  return n;
}

int64_t adapter_param_formula(int64_t c, int64_t m) {
  return c * m + c * m + 9 * m * m + m * c + (m + m + m + c);
}

ag::Var adapter_plain(const ag::Var& f_x, const nn::Linear& down, const nn::Linear& up) {
  if (f_x.value().rank() != 3 || f_x.dim(2) != down.weight.dim(0)) {
    throw ShapeError("adapter_plain: input " + shape_str(f_x.shape()) +
                     " does not match adapter width " + std::to_string(down.weight.dim(0)));
  }
  return up(ag::relu(down(f_x)));
}

ag::Var fusion_unit(const ag::Var& x_low, const ag::Var& sem_low, const nn::Conv2d& conv) {
  if (x_low.shape() != sem_low.shape() || x_low.value().rank() != 3) {
    throw ShapeError("fusion_unit: mismatched inputs " + shape_str(x_low.shape()) + " and " +
                     shape_str(sem_low.shape()));
  }
  const int64_t side = square_side(x_low.dim(1));
  const ag::Var gated = ag::add(x_low, ag::mul(x_low, ag::sigmoid(sem_low)));
  const ag::Var fused = conv(ag::tokens_to_grid(gated, side, side));
  return ag::grid_to_tokens(fused);
}

ag::Var madapter_forward(const ag::Var& f_x, const ag::Var& sem_tokens, const AdapterParams& p,
                         AdapterVariant variant) {
  if (f_x.value().rank() != 3) throw ShapeError("madapter: f_x must be [b, d, c]");
  if (sem_tokens.defined() && sem_tokens.shape() != f_x.shape()) {
    throw ShapeError("madapter: semantic tokens " + shape_str(sem_tokens.shape()) +
                     " not aligned with f_x " + shape_str(f_x.shape()));
  }
  switch (variant) {
    case AdapterVariant::full: {
      const ag::Var x_low = p.down(f_x);
      const ag::Var sem_low = p.down_sem(sem_tokens);
      return p.up(ag::relu(fusion_unit(x_low, sem_low, p.fusion)));
    }
    case AdapterVariant::no_fusion:
      return p.up(ag::relu(ag::add(p.down(f_x), p.down_sem(sem_tokens))));
    case AdapterVariant::adapter_fx:
      return adapter_plain(f_x, p.down, p.up);
    case AdapterVariant::adapter_fsem:
      return adapter_plain(sem_tokens, p.down_sem, p.up);
    case AdapterVariant::none:
      break;
  }
  throw std::logic_error("madapter_forward: adapters disabled");
}

SemanticAlign::SemanticAlign(const nn::Builder& b, int64_t sem_channels, int64_t width)
    : proj(nn::Conv2d::make(b, "madapter.sem_proj", sem_channels, width, 1, 1, 0)) {}

ag::Var SemanticAlign::align(const ag::Var& f_sem, int64_t grid) const {
  if (f_sem.value().rank() != 4 || f_sem.dim(1) != proj.weight.dim(1)) {
    throw ShapeError("madapter: f_sem " + shape_str(f_sem.shape()) + " does not have " +
                     std::to_string(proj.weight.dim(1)) + " channels");
  }
  ag::Var resampled = f_sem;
  if (f_sem.dim(2) != grid || f_sem.dim(3) != grid) resampled = ag::resize_bilinear(f_sem, grid, grid);
  return ag::grid_to_tokens(proj(resampled));
}

ag::Var madapter_forward(const ag::Var& f_x, const ag::Var& f_sem, const SemanticAlign& align,
                         const AdapterParams& p, AdapterVariant variant) {
  const int64_t side = square_side(f_x.dim(1));
  ag::Var sem;
  if (variant != AdapterVariant::adapter_fx) sem = align.align(f_sem, side);
  return madapter_forward(f_x, sem, p, variant);
}

MAdapterSet::MAdapterSet(const nn::Builder& b, int64_t depth, int64_t width, int64_t bottleneck,
                         int64_t sem_channels, AdapterVariant variant)
    : variant_(variant) {
  if (variant == AdapterVariant::none) return;
  if (bottleneck < 1 || bottleneck >= width) {
    throw std::invalid_argument("madapter: bottleneck " + std::to_string(bottleneck) +
                                " must be in [1, " + std::to_string(width) + ")");
  }
  if (variant != AdapterVariant::adapter_fx) align = SemanticAlign(b, sem_channels, width);
  for (int64_t i = 0; i < depth; ++i) {
    const std::string p = "madapter.block" + std::to_string(i);
    blocks.emplace_back(AdapterParams::make(b, p + ".attn", width, bottleneck, variant),
                        AdapterParams::make(b, p + ".mlp", width, bottleneck, variant));
  }
}

std::vector<BlockAdapters> MAdapterSet::bind(const ag::Var& f_sem, int64_t grid) const {
  std::vector<BlockAdapters> hooks;
  if (!enabled()) return hooks;
  ag::Var sem;
  if (variant_ != AdapterVariant::adapter_fx) sem = align.align(f_sem, grid);
  const AdapterVariant v = variant_;
  for (const auto& [attn, mlp] : blocks) {
    hooks.push_back({[&attn, sem, v](const ag::Var& x) { return madapter_forward(x, sem, attn, v); },
                     [&mlp, sem, v](const ag::Var& x) { return madapter_forward(x, sem, mlp, v); }});
  }
  return hooks;
}

}  // namespace sammese
