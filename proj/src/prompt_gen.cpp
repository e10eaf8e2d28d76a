// SPDX-License-Identifier: Apache-2.0
#include "sammese/prompt_gen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "sammese/kernels.hpp"

namespace sammese {

PromptGenerator::PromptGenerator(const nn::Builder& b, int64_t sem_channels, int64_t queries,
                                 int64_t query_dim, int64_t out_dim, int64_t heads) {
  if (queries < 1) throw std::invalid_argument("prompt_gen: query count must be >= 1");
  sem_proj = nn::Conv2d::make(b, "prompt_gen.sem_proj", sem_channels, query_dim, 1, 1, 0);
  queries_ = b.param("prompt_gen.queries", {queries, query_dim}, Init::normal(0.5));
  cross = nn::Attention::make(b, "prompt_gen.cross", query_dim, query_dim, query_dim, heads, false);
  self = nn::Attention::make(b, "prompt_gen.self", query_dim, query_dim, query_dim, heads, false);
  out = nn::Linear::make(b, "prompt_gen.out", query_dim, out_dim);
}

ag::Var PromptGenerator::forward(const ag::Var& f_sem) const {
  if (f_sem.value().rank() != 4 || f_sem.dim(1) != sem_proj.weight.dim(1)) {
    throw ShapeError("prompt_gen: f_sem " + shape_str(f_sem.shape()) + " does not have " +
                     std::to_string(sem_proj.weight.dim(1)) + " channels");
  }
  const ag::Var q_sem = ag::grid_to_tokens(sem_proj(f_sem));
  const ag::Var q = ag::broadcast_batch(queries_, f_sem.dim(0));
  const ag::Var x1 = ag::add(q, cross(q, q_sem));
  const ag::Var x2 = ag::add(x1, self(x1, x1));
  return out(x2);
}

std::vector<Component> connected_components(const std::vector<uint8_t>& mask, int64_t h,
                                            int64_t w) {
  if (static_cast<int64_t>(mask.size()) != h * w) {
    throw ShapeError("connected_components: mask size does not match " + std::to_string(h) +
                     "x" + std::to_string(w));
  }
  std::vector<int32_t> label(mask.size(), -1);
  std::vector<Component> comps;
  std::vector<int64_t> stack;
  for (int64_t start = 0; start < h * w; ++start) {
    if (!mask[static_cast<size_t>(start)] || label[static_cast<size_t>(start)] >= 0) continue;
    const auto id = static_cast<int32_t>(comps.size());
    Component c;
    c.x_min = c.x_max = start % w;
    c.y_min = c.y_max = start / w;
    label[static_cast<size_t>(start)] = id;
    stack.push_back(start);
    while (!stack.empty()) {
      const int64_t p = stack.back();
      stack.pop_back();
      const int64_t y = p / w, x = p % w;
      c.pixels.push_back(p);
      ++c.area;
      c.sum_x += x;
      c.sum_y += y;
      c.x_min = std::min(c.x_min, x);
      c.x_max = std::max(c.x_max, x);
      c.y_min = std::min(c.y_min, y);
      c.y_max = std::max(c.y_max, y);
      const int64_t nb[4][2] = {{y - 1, x}, {y + 1, x}, {y, x - 1}, {y, x + 1}};
      for (const auto& n : nb) {
        if (n[0] < 0 || n[0] >= h || n[1] < 0 || n[1] >= w) continue;
        const auto q = static_cast<size_t>(n[0] * w + n[1]);
        if (mask[q] && label[q] < 0) {
          label[q] = id;
          stack.push_back(static_cast<int64_t>(q));
        }
      }
    }
    std::sort(c.pixels.begin(), c.pixels.end());
    comps.push_back(std::move(c));
  }
  return comps;
}

Point component_point(const Component& c, int64_t w) {
  const int64_t fx = c.sum_x / c.area;
  const int64_t fy = c.sum_y / c.area;
  if (std::binary_search(c.pixels.begin(), c.pixels.end(), fy * w + fx)) {
    return {static_cast<double>(fx), static_cast<double>(fy), 1};
  }
  // Squared distance to the exact centroid scaled by area^2 stays integral.
  int64_t best = c.pixels.front();
  int64_t best_d = std::numeric_limits<int64_t>::max();
  for (const int64_t p : c.pixels) {
    const int64_t dx = (p % w) * c.area - c.sum_x;
    const int64_t dy = (p / w) * c.area - c.sum_y;
    const int64_t d = dx * dx + dy * dy;
    if (d < best_d) {
      best_d = d;
      best = p;
    }
  }
  return {static_cast<double>(best % w), static_cast<double>(best / w), 1};
}

GeometricPrompts derive_geometric(const Tensor& coarse, const GeometricOptions& opt) {
  if (coarse.rank() != 2) throw ShapeError("derive_geometric: coarse map must be [h, w]");
  const int64_t h = coarse.dim(0), w = coarse.dim(1);
  std::vector<uint8_t> fg(static_cast<size_t>(h * w));
  for (int64_t i = 0; i < h * w; ++i) fg[static_cast<size_t>(i)] = coarse[i] >= opt.threshold;

  std::vector<Component> kept;
  const double min_area = opt.min_area_frac * static_cast<double>(h * w);
  for (auto& c : connected_components(fg, h, w)) {
    if (static_cast<double>(c.area) >= min_area) kept.push_back(std::move(c));
  }

  GeometricPrompts geo;
  if (kept.empty()) {
    int64_t arg = 0;
    for (int64_t i = 1; i < h * w; ++i)
      if (coarse[i] > coarse[arg]) arg = i;
    geo.points.push_back({static_cast<double>(arg % w), static_cast<double>(arg / w), 1});
  } else {
    auto push_box = [&](int64_t x0, int64_t y0, int64_t x1, int64_t y1) {
      if (x1 > x0 && y1 > y0) {
        geo.boxes.push_back({static_cast<double>(x0), static_cast<double>(y0),
                             static_cast<double>(x1), static_cast<double>(y1)});
      }
    };
    if (opt.per_component_boxes) {
      for (const auto& c : kept) push_box(c.x_min, c.y_min, c.x_max, c.y_max);
    } else {
      int64_t x0 = w, y0 = h, x1 = -1, y1 = -1;
      for (const auto& c : kept) {
        x0 = std::min(x0, c.x_min);
        y0 = std::min(y0, c.y_min);
        x1 = std::max(x1, c.x_max);
        y1 = std::max(y1, c.y_max);
      }
      push_box(x0, y0, x1, y1);
    }
    std::stable_sort(kept.begin(), kept.end(),
                     [](const Component& a, const Component& b) { return a.area > b.area; });
    const auto n = std::min<size_t>(kept.size(), static_cast<size_t>(std::max<int64_t>(0, opt.max_points)));
    for (size_t i = 0; i < n; ++i) geo.points.push_back(component_point(kept[i], w));
  }

  if (opt.mask_size > 0) {
    geo.mask = Tensor({opt.mask_size, opt.mask_size});
    kernels::resize_bilinear_forward({1, h, w, opt.mask_size, opt.mask_size}, coarse.data(),
                                     geo.mask.data());
  }
  return geo;
}

PromptEmbeddings assemble_decoder_inputs(const ag::Var& p_sem, const GeometricPrompts& geo,
                                         const PromptEncoder& encoder, bool use_geometric) {
  if (p_sem.defined() && (p_sem.value().rank() != 3 || p_sem.dim(2) != encoder.embed_dim())) {
    throw ShapeError("assemble_decoder_inputs: semantic prompts " + shape_str(p_sem.shape()) +
                     " do not match prompt width " + std::to_string(encoder.embed_dim()));
  }
  PromptEmbeddings out;
  if (use_geometric) {
    out = encoder.encode(geo);
  } else {
    out.sparse = ag::Var::constant(Tensor({1, 0, encoder.embed_dim()}));
    out.dense = encoder.no_mask_dense(1);
  }
  if (p_sem.defined()) {
    if (p_sem.dim(0) != out.sparse.dim(0)) {
      out.sparse = ag::broadcast_batch(ag::reshape(out.sparse, {out.sparse.dim(1), out.sparse.dim(2)}),
                                       p_sem.dim(0));
    }
    out.sparse = ag::concat1(out.sparse, p_sem);
  }
  return out;
}

}  // namespace sammese
