// SPDX-License-Identifier: Apache-2.0
#include "sammese/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>

namespace sammese {

std::string to_string(Modality m) { return m == Modality::thermal ? "thermal" : "depth"; }
std::string to_string(Backend b) { return b == Backend::stub ? "stub" : "pretrained"; }

std::string to_string(McfmVariant v) {
  switch (v) {
    case McfmVariant::full: return "full";
    case McfmVariant::no_mcfm: return "no_mcfm";
    case McfmVariant::complex_design: return "cd";
  }
  return "?";
}

std::string to_string(AdapterVariant v) {
  switch (v) {
    case AdapterVariant::full: return "full";
    case AdapterVariant::none: return "none";
    case AdapterVariant::no_fusion: return "no_fusion";
    case AdapterVariant::adapter_fx: return "adapter_fx";
    case AdapterVariant::adapter_fsem: return "adapter_fsem";
  }
  return "?";
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

int64_t parse_int(const std::string& key, const std::string& v) {
  int64_t out = 0;
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) throw ConfigError(key + ": expected integer, got '" + v + "'");
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected number, got '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": expected boolean, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

template <size_t N>
std::array<double, N> parse_doubles(const std::string& key, const std::string& v) {
  const auto items = split_list(v);
  if (items.size() != N) throw ConfigError(key + ": expected " + std::to_string(N) + " values");
  std::array<double, N> out{};
  for (size_t i = 0; i < N; ++i) out[i] = parse_double(key, items[i]);
  return out;
}

std::string fmt_double(double d) {
  std::ostringstream os;
  os << std::setprecision(17) << d;
  return os.str();
}

template <typename T, size_t N>
std::string fmt_list(const std::array<T, N>& a) {
  std::ostringstream os;
  for (size_t i = 0; i < N; ++i) {
    if (i) os << ',';
    if constexpr (std::is_floating_point_v<T>) {
      os << fmt_double(a[i]);
    } else {
      os << a[i];
    }
  }
  return os.str();
}

struct Field {
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
  bool architecture;
};

#define SAMMESE_INT(name, arch)                                                              \
  {                                                                                          \
#name, {[](RunConfig& c, const std::string& k, const std::string& v) {                     \
              c.name = parse_int(k, v);                                                      \
            },                                                                               \
            [](const RunConfig& c) { return std::to_string(c.name); }, arch }                \
  }
#define SAMMESE_DOUBLE(name, arch)                                                           \
  {                                                                                          \
#name, {[](RunConfig& c, const std::string& k, const std::string& v) {                     \
              c.name = parse_double(k, v);                                                   \
            },                                                                               \
            [](const RunConfig& c) { return fmt_double(c.name); }, arch }                    \
  }
#define SAMMESE_BOOL(name, arch)                                                             \
  {                                                                                          \
#name, {[](RunConfig& c, const std::string& k, const std::string& v) {                     \
              c.name = parse_bool(k, v);                                                     \
            },                                                                               \
            [](const RunConfig& c) { return std::string(c.name ? "true" : "false"); }, arch } \
  }
#define SAMMESE_STRING(name, arch)                                                                \
  {                                                                                               \
#name, {[](RunConfig& c, const std::string&, const std::string& v) { c.name = v; },             \
            [](const RunConfig& c) { return c.name; }, arch }                                     \
  }

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = {
      SAMMESE_STRING(train_root, false),
      SAMMESE_STRING(test_root, false),
      {"modality",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          if (v == "thermal") c.modality = Modality::thermal;
          else if (v == "depth") c.modality = Modality::depth;
          else throw ConfigError(k + ": expected thermal|depth, got '" + v + "'");
        },
        [](const RunConfig& c) { return to_string(c.modality); }, false}},
      {"augmentation",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          if (v != "none") throw ConfigError(k + ": only 'none' is supported");
          c.augmentation = v;
        },
        [](const RunConfig& c) { return c.augmentation; }, false}},
      {"norm_mean",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          c.norm_mean = parse_doubles<3>(k, v);
        },
        [](const RunConfig& c) { return fmt_list(c.norm_mean); }, true}},
      {"norm_std",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          c.norm_std = parse_doubles<3>(k, v);
        },
        [](const RunConfig& c) { return fmt_list(c.norm_std); }, true}},
      SAMMESE_INT(sam_size, true),
      SAMMESE_INT(sem_size, true),
      {"backend",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          if (v == "stub") c.backend = Backend::stub;
          else if (v == "pretrained") c.backend = Backend::pretrained;
          else throw ConfigError(k + ": expected stub|pretrained, got '" + v + "'");
        },
        [](const RunConfig& c) { return to_string(c.backend); }, true}},
      SAMMESE_STRING(pretrained_weights, false),
      SAMMESE_INT(patch_size, true),
      SAMMESE_INT(encoder_width, true),
      SAMMESE_INT(encoder_depth, true),
      SAMMESE_INT(encoder_heads, true),
      SAMMESE_INT(embed_dim, true),
      SAMMESE_INT(decoder_heads, true),
      SAMMESE_INT(sem_stem_stride, true),
      {"sem_widths",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          const auto items = split_list(v);
          if (items.size() != 4) throw ConfigError(k + ": expected 4 widths");
          for (size_t i = 0; i < 4; ++i) c.sem_widths[i] = parse_int(k, items[i]);
        },
        [](const RunConfig& c) { return fmt_list(c.sem_widths); }, true}},
      SAMMESE_INT(queries, true),
      SAMMESE_INT(query_dim, true),
      SAMMESE_INT(bottleneck, true),
      SAMMESE_INT(mcfm_heads, true),
      SAMMESE_INT(feature_level, true),
      {"mcfm_variant",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          if (v == "full") c.mcfm_variant = McfmVariant::full;
          else if (v == "no_mcfm") c.mcfm_variant = McfmVariant::no_mcfm;
          else if (v == "cd") c.mcfm_variant = McfmVariant::complex_design;
          else throw ConfigError(k + ": expected full|no_mcfm|cd, got '" + v + "'");
        },
        [](const RunConfig& c) { return to_string(c.mcfm_variant); }, true}},
      {"adapter_variant",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          if (v == "full") c.adapter_variant = AdapterVariant::full;
          else if (v == "none") c.adapter_variant = AdapterVariant::none;
          else if (v == "no_fusion") c.adapter_variant = AdapterVariant::no_fusion;
          else if (v == "adapter_fx") c.adapter_variant = AdapterVariant::adapter_fx;
          else if (v == "adapter_fsem") c.adapter_variant = AdapterVariant::adapter_fsem;
          else
            throw ConfigError(k + ": expected full|none|no_fusion|adapter_fx|adapter_fsem, got '" +
                              v + "'");
        },
        [](const RunConfig& c) { return to_string(c.adapter_variant); }, true}},
      SAMMESE_BOOL(semantic_prompts, true),
      SAMMESE_BOOL(geometric_prompts, true),
      SAMMESE_DOUBLE(prompt_threshold, false),
      SAMMESE_DOUBLE(min_area_frac, false),
      SAMMESE_INT(max_points, false),
      SAMMESE_BOOL(per_component_boxes, false),
      SAMMESE_DOUBLE(lr, false),
      SAMMESE_INT(batch, false),
      SAMMESE_INT(epochs, false),
      SAMMESE_INT(max_steps, false),
      {"seed",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          const int64_t s = parse_int(k, v);
          if (s < 0) throw ConfigError(k + ": must be non-negative");
          c.seed = static_cast<uint64_t>(s);
        },
        [](const RunConfig& c) { return std::to_string(c.seed); }, false}},
      SAMMESE_DOUBLE(adam_beta1, false),
      SAMMESE_DOUBLE(adam_beta2, false),
      SAMMESE_DOUBLE(adam_eps, false),
      SAMMESE_DOUBLE(weight_decay, false),
      SAMMESE_DOUBLE(bce_eps, false),
      SAMMESE_DOUBLE(dice_smooth, false),
      SAMMESE_DOUBLE(weight_main, false),
      SAMMESE_DOUBLE(weight_coarse, false),
      SAMMESE_STRING(ckpt, false),
      SAMMESE_STRING(out, false),
  };
  return table;
}

#undef SAMMESE_INT
#undef SAMMESE_DOUBLE
#undef SAMMESE_BOOL
#undef SAMMESE_STRING

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto& f = fields();
  auto it = f.find(key);
  if (it == f.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second.set(*this, key, trim(value));
}

std::string RunConfig::get(const std::string& key) const {
  const auto& f = fields();
  auto it = f.find(key);
  if (it == f.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second.get(*this);
}

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> k = [] {
    std::vector<std::string> out;
    for (const auto& [name, _] : fields()) out.push_back(name);
    return out;
  }();
  return k;
}

void RunConfig::load_text(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    try {
      set(trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  load_text(ss.str(), path);
}

std::string RunConfig::to_text() const {
  std::ostringstream os;
  for (const auto& [name, field] : fields()) os << name << " = " << field.get(*this) << '\n';
  return os.str();
}

std::string RunConfig::architecture_text() const {
  std::ostringstream os;
  for (const auto& [name, field] : fields())
    if (field.architecture) os << name << " = " << field.get(*this) << '\n';
  return os.str();
}

uint64_t RunConfig::architecture_hash() const {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : architecture_text()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

void RunConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (queries < 1) fail("queries must be >= 1 (disable semantic prompts instead)");
  if (bottleneck < 0) fail("bottleneck must be >= 1 (or 0 for the default)");
  if (effective_bottleneck() >= encoder_width) fail("bottleneck must be smaller than encoder_width");
  if (patch_size < 1 || sam_size % patch_size != 0) {
    fail("sam_size " + std::to_string(sam_size) + " not divisible by patch_size " +
         std::to_string(patch_size));
  }
  const int64_t total_stride = sem_stem_stride * 8;
  if (sem_stem_stride < 1 || sem_size % total_stride != 0) {
    fail("sem_size " + std::to_string(sem_size) + " not divisible by the semantic encoder stride " +
         std::to_string(total_stride));
  }
  if (feature_level < 1 || feature_level > 4) fail("feature_level must be in 1..4");
  if (encoder_width % encoder_heads != 0) fail("encoder_width not divisible by encoder_heads");
  if (embed_dim % decoder_heads != 0) fail("embed_dim not divisible by decoder_heads");
  if (embed_dim % 8 != 0) fail("embed_dim must be a multiple of 8");
  if (embed_dim % 4 != 0 || query_dim < 1) fail("bad prompt dimensions");
  const int64_t c_sem = sem_widths[static_cast<size_t>(feature_level - 1)];
  if (c_sem % mcfm_heads != 0) fail("semantic width not divisible by mcfm_heads");
  for (int64_t w : sem_widths)
    if (w < 1) fail("sem_widths must be positive");
  if (encoder_depth < 1) fail("encoder_depth must be >= 1");
  if (batch < 1) fail("batch must be >= 1");
  if (epochs < 1) fail("epochs must be >= 1");
  if (lr < 0) fail("lr must be >= 0");
  if (prompt_threshold < 0 || prompt_threshold > 1) fail("prompt_threshold must be in [0, 1]");
  if (max_points < 1) fail("max_points must be >= 1");
  for (double s : norm_std)
    if (s <= 0) fail("norm_std entries must be positive");
  if (bce_eps <= 0 || bce_eps >= 0.5) fail("bce_eps must be in (0, 0.5)");
  if (dice_smooth <= 0) fail("dice_smooth must be positive");
}

RunConfig RunConfig::toy() {
  RunConfig c;
  c.sam_size = 64;
  c.patch_size = 8;
  c.encoder_width = 64;
  c.encoder_depth = 2;
  c.encoder_heads = 2;
  c.embed_dim = 64;
  c.decoder_heads = 2;
  c.sem_size = 128;
  c.sem_stem_stride = 2;
  c.sem_widths = {8, 16, 32, 32};
  c.queries = 30;
  c.query_dim = 32;
  c.lr = 1e-3;
  c.epochs = 100;
  return c;
}

RunConfig RunConfig::pretrained_dims() {
  RunConfig c;
  c.backend = Backend::pretrained;
  c.patch_size = 16;
  c.encoder_width = 768;
  c.encoder_depth = 12;
  c.encoder_heads = 12;
  c.embed_dim = 256;
  c.decoder_heads = 8;
  c.sem_stem_stride = 4;
  c.sem_widths = {128, 256, 512, 1024};
  c.query_dim = 256;
  return c;
}

}  // namespace sammese
