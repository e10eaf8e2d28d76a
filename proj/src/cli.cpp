// SPDX-License-Identifier: Apache-2.0
#include "sammese/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "sammese/checkpoint.hpp"
#include "sammese/data_io.hpp"
#include "sammese/metrics.hpp"
#include "sammese/model.hpp"
#include "sammese/training.hpp"

namespace fs = std::filesystem;

namespace sammese {

namespace {

/// Thrown for bad invocations that CLI11 cannot detect (exit code 2).
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CommonOptions {
  std::string config;
  std::vector<std::string> sets;
  int64_t seed = -1;
  std::string ckpt;
  std::string out;
  std::string ablate;
  std::string backend;
  std::string data;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config, "Flat key = value config file");
  cmd->add_option("--set", o.sets, "Override one config key (key=value); repeatable");
  cmd->add_option("--seed", o.seed, "Random seed")->check(CLI::NonNegativeNumber);
  cmd->add_option("--ckpt", o.ckpt, "Checkpoint path");
  cmd->add_option("--out", o.out, "Output directory");
  cmd->add_option("--ablate", o.ablate,
                  "Comma list of: no-mcfm, cd, no-madapter, no-fusion, adapter-fx, adapter-fsem, "
                  "no-semantic, no-geometric");
  cmd->add_option("--backend", o.backend, "Foundation backend")
      ->check(CLI::IsMember({"stub", "pretrained"}));
  cmd->add_option("--data", o.data, "Dataset root (RGB/, T/ or Depth/, GT/)");
}

RunConfig build_config(const CommonOptions& o, const std::string& arch_from = {}) {
  RunConfig cfg;
  if (!arch_from.empty()) {
    // No --config: take the architecture recorded in the checkpoint.
    const Archive a = read_archive(arch_from);
    cfg.load_text(a.manifest.at("architecture").get<std::string>(), arch_from);
  }
  if (!o.config.empty()) cfg.load_file(o.config);
  for (const auto& kv : o.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    cfg.set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }
  if (o.seed >= 0) cfg.seed = static_cast<uint64_t>(o.seed);
  if (!o.backend.empty()) cfg.set("backend", o.backend);
  if (!o.ablate.empty()) apply_ablation(cfg, o.ablate);
  if (!o.ckpt.empty()) cfg.ckpt = o.ckpt;
  if (!o.out.empty()) cfg.out = o.out;
  cfg.validate();
  return cfg;
}

std::string require_dataset(const std::string& root, Modality modality, bool with_gt) {
  if (root.empty()) throw UsageError("no dataset path given (use --data or train_root)");
  const fs::path base(root);
  std::vector<std::string> dirs = {"RGB", aux_dir_name(modality)};
  if (with_gt) dirs.push_back("GT");
  for (const auto& d : dirs) {
    if (!fs::is_directory(base / d)) {
      throw UsageError("dataset path " + root + " has no " + d + "/ directory");
    }
  }
  return root;
}

std::vector<PreprocessedSample> load_preprocessed(const std::string& root, const RunConfig& cfg) {
  std::vector<PreprocessedSample> out;
  for (const auto& s : load_dataset(root, cfg.modality, true)) out.push_back(preprocess(s, cfg));
  return out;
}

void print_param_count(const SammeseModel& model, std::ostream& out) {
  out << "learnable parameters: " << model.registry().trainable_count()
      << "  (frozen: " << model.registry().frozen_count() << ")\n";
}

/// Saliency map resized back to the source resolution.
Tensor to_source(const ag::Var& map, int64_t h, int64_t w) {
  const int64_t s = map.dim(2);
  const Tensor plane = map.value().reshaped({1, s, s});
  if (h == s && w == s) return plane.reshaped({s, s});
  return resize_image(plane, h, w).reshaped({h, w});
}

Tensor channel_mean_heatmap(const ag::Var& f_sem) {
  const int64_t c = f_sem.dim(1), h = f_sem.dim(2), w = f_sem.dim(3);
  Tensor m({h, w});
  for (int64_t k = 0; k < c; ++k)
    for (int64_t i = 0; i < h * w; ++i) m[i] += f_sem.value()[k * h * w + i] / static_cast<double>(c);
  double lo = m[0], hi = m[0];
  for (double v : m.values()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  for (int64_t i = 0; i < m.numel(); ++i) m[i] = hi > lo ? (m[i] - lo) / (hi - lo) : 0.0;
  return m;
}

nlohmann::json prompts_json(const GeometricPrompts& geo) {
  nlohmann::json j;
  j["boxes"] = nlohmann::json::array();
  for (const auto& b : geo.boxes) j["boxes"].push_back({b.x_min, b.y_min, b.x_max, b.y_max});
  j["points"] = nlohmann::json::array();
  for (const auto& p : geo.points) j["points"].push_back({p.x, p.y, p.label});
  return j;
}

std::vector<int64_t> parse_values(const std::string& s) {
  std::vector<int64_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      size_t pos = 0;
      out.push_back(std::stoll(item, &pos));
      if (pos != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError("--values: '" + item + "' is not an integer");
    }
  }
  return out;
}

// Commands -----------------------------------------------------------------

int cmd_train(const CommonOptions& o, std::ostream& out) {
  RunConfig cfg = build_config(o);
  const std::string root = require_dataset(o.data.empty() ? cfg.train_root : o.data, cfg.modality, true);
  const std::string out_dir = cfg.out.empty() ? "runs/train" : cfg.out;
  const std::string ckpt = cfg.ckpt.empty() ? (fs::path(out_dir) / "model.ckpt").string() : cfg.ckpt;
  const auto data = load_preprocessed(root, cfg);
  SammeseModel model(cfg);
  print_param_count(model, out);
  out << "training on " << data.size() << " samples from " << root << '\n';
  fs::create_directories(out_dir);
  {
    std::ofstream c(fs::path(out_dir) / "config.txt");
    c << cfg.to_text();
  }
  TrainOptions topt;
  topt.log_csv = (fs::path(out_dir) / "train_log.csv").string();
  topt.ckpt = ckpt;
  topt.progress = &out;
  const TrainResult r = train(model, data, topt);
  out << "finished " << r.step_count << " steps; checkpoint " << ckpt << '\n';
  return kExitOk;
}

int cmd_predict(const CommonOptions& o, const std::string& rgb, const std::string& aux,
                bool dump_prompts, bool coarse, bool heatmaps, std::ostream& out,
                std::ostream& err) {
  if (o.ckpt.empty()) throw UsageError("predict needs --ckpt");
  if (!fs::exists(o.ckpt)) throw UsageError("checkpoint " + o.ckpt + " does not exist");
  RunConfig cfg = build_config(o, o.config.empty() ? o.ckpt : std::string());
  const std::string out_dir = cfg.out.empty() ? "predictions" : cfg.out;

  struct Job {
    std::string id, rgb, aux;
  };
  std::vector<Job> jobs;
  int failures = 0;
  if (!rgb.empty() || !aux.empty()) {
    if (rgb.empty() || aux.empty()) throw UsageError("--rgb and --aux must be given together");
    jobs.push_back({fs::path(rgb).stem().string(), rgb, aux});
  } else {
    const std::string root = o.data.empty() ? cfg.test_root : o.data;
    require_dataset(root, cfg.modality, false);
    const auto rgbs = list_image_files((fs::path(root) / "RGB").string());
    const auto auxs = list_image_files((fs::path(root) / aux_dir_name(cfg.modality)).string());
    for (const auto& [id, path] : rgbs) {
      const auto it = auxs.find(id);
      if (it == auxs.end()) {
        err << "error: " << id << ": no auxiliary image\n";
        ++failures;
        continue;
      }
      jobs.push_back({id, path, it->second});
    }
  }

  SammeseModel model(cfg);
  load_checkpoint(cfg.ckpt, model.registry(), cfg);
  model.set_caching(false);
  print_param_count(model, out);

  nlohmann::json prompts = nlohmann::json::object();
  int written = 0;
  for (const auto& job : jobs) {
    try {
      const SamplePair pair = load_pair(job.rgb, job.aux, std::nullopt, job.id);
      const PreprocessedSample s = preprocess(pair, cfg);
      const ForwardResult r = model.forward(s);
      const fs::path base(out_dir);
      write_gray_png((base / (job.id + ".png")).string(), to_source(r.saliency, s.source_h, s.source_w));
      if (coarse) {
        write_gray_png((base / "coarse" / (job.id + ".png")).string(),
                       to_source(r.coarse, s.source_h, s.source_w));
      }
      if (heatmaps) write_gray_png((base / "heatmaps" / (job.id + ".png")).string(), channel_mean_heatmap(r.f_sem));
      if (dump_prompts) prompts[job.id] = prompts_json(r.geo);
      ++written;
    } catch (const std::exception& e) {
      err << "error: " << job.id << ": " << e.what() << '\n';
      ++failures;
    }
  }
  if (dump_prompts) {
    fs::create_directories(out_dir);
    std::ofstream f(fs::path(out_dir) / "prompts.json");
    f << prompts.dump(2) << '\n';
  }
  out << "wrote " << written << " saliency map(s) to " << out_dir;
  if (failures) out << "; " << failures << " failed";
  out << '\n';
  return failures ? kExitRuntime : kExitOk;
}

int cmd_eval(const std::string& pred, const std::string& gt_arg, const std::string& data,
             const std::string& out_path, std::ostream& out) {
  if (pred.empty()) throw UsageError("eval needs --pred");
  const std::string gt = !gt_arg.empty() ? gt_arg : (data.empty() ? "" : (fs::path(data) / "GT").string());
  if (gt.empty()) throw UsageError("eval needs --gt or --data");
  if (!fs::is_directory(pred)) throw UsageError("prediction directory " + pred + " does not exist");
  if (!fs::is_directory(gt)) throw UsageError("ground-truth directory " + gt + " does not exist");
  const EvalResult r = evaluate_dataset(pred, gt);
  out << format_eval_table(r, fs::path(gt).parent_path().filename().string());
  if (!out_path.empty()) {
    const fs::path p = fs::path(out_path).extension() == ".csv" ? fs::path(out_path)
                                                                 : fs::path(out_path) / "eval.csv";
    write_eval_csv(p.string(), r);
    out << "per-image scores: " << p.string() << '\n';
  }
  return kExitOk;
}

int cmd_ablate(const CommonOptions& o, const std::string& which, const std::string& values,
               const std::string& test_root, std::ostream& out) {
  const RunConfig base = build_config(o);
  const std::string train_root =
      require_dataset(o.data.empty() ? base.train_root : o.data, base.modality, true);
  std::string eval_root = !test_root.empty() ? test_root : base.test_root;
  if (eval_root.empty()) eval_root = train_root;
  require_dataset(eval_root, base.modality, true);
  const auto rows = ablation_rows(base, which, parse_values(values));

  const auto train_raw = load_dataset(train_root, base.modality, true);
  const auto test_raw = load_dataset(eval_root, base.modality, true);
  const std::string out_dir = base.out.empty() ? "runs/ablate" : base.out;

  struct Result {
    std::string label;
    int64_t params;
    EvalResult eval;
  };
  std::vector<Result> results;
  for (const auto& row : rows) {
    std::vector<PreprocessedSample> train_set;
    for (const auto& s : train_raw) train_set.push_back(preprocess(s, row.cfg));
    SammeseModel model(row.cfg);
    out << "== " << row.label << ": " << model.registry().trainable_count()
        << " learnable parameters\n";
    train(model, train_set);
    model.clear_cache();
    std::vector<ImageScores> scores;
    for (const auto& s : test_raw) {
      const PreprocessedSample p = preprocess(s, row.cfg);
      const ForwardResult r = model.forward(p);
      scores.push_back(score_image(quantize8(to_source(r.saliency, p.source_h, p.source_w)), s.gt, s.id));
    }
    results.push_back({row.label, model.registry().trainable_count(), aggregate(std::move(scores))});
  }

  std::ostringstream table;
  table << std::left << std::setw(20) << "Variant" << std::right << std::setw(10) << "Params"
        << std::setw(8) << "S_m" << std::setw(8) << "maxE" << std::setw(8) << "maxF"
        << std::setw(8) << "MAE" << '\n';
  for (const auto& r : results) {
    table << std::left << std::setw(20) << r.label << std::right << std::setw(10) << r.params
          << std::fixed << std::setprecision(3) << std::setw(8) << r.eval.mean.s_measure
          << std::setw(8) << r.eval.mean.e_max << std::setw(8) << r.eval.mean.f_max
          << std::setw(8) << r.eval.mean.mae << '\n';
  }
  out << table.str();
  fs::create_directories(out_dir);
  const fs::path csv = fs::path(out_dir) / ("ablation_" + which + ".csv");
  std::ofstream f(csv);
  f << "variant,params,s_measure,e_max,e_mean,f_max,f_mean,mae\n" << std::setprecision(10);
  for (const auto& r : results) {
    f << '"' << r.label << "\"," << r.params << ',' << r.eval.mean.s_measure << ',' << r.eval.mean.e_max
      << ',' << r.eval.mean.e_mean << ',' << r.eval.mean.f_max << ',' << r.eval.mean.f_mean << ','
      << r.eval.mean.mae << '\n';
  }
  out << "table: " << csv.string() << '\n';
  return kExitOk;
}

int cmd_synth(const std::string& out_dir, int64_t n, int64_t size, int64_t seed,
              const std::string& corruption, const std::string& modality, std::ostream& out) {
  if (out_dir.empty()) throw UsageError("synth-data needs --out");
  RunConfig tmp;
  tmp.set("modality", modality);
  const auto data = make_synthetic_dataset(n, size, static_cast<uint64_t>(seed),
                                           corruption_from_string(corruption));
  write_dataset(data, out_dir, tmp.modality);
  out << "wrote " << data.size() << " synthetic pairs (" << size << "x" << size << ") to "
      << out_dir << '\n';
  return kExitOk;
}

}  // namespace

void apply_ablation(RunConfig& cfg, const std::string& list) {
  std::stringstream ss(list);
  std::string name;
  while (std::getline(ss, name, ',')) {
    if (name.empty()) continue;
    if (name == "no-mcfm") cfg.mcfm_variant = McfmVariant::no_mcfm;
    else if (name == "cd") cfg.mcfm_variant = McfmVariant::complex_design;
    else if (name == "no-madapter") cfg.adapter_variant = AdapterVariant::none;
    else if (name == "no-fusion") cfg.adapter_variant = AdapterVariant::no_fusion;
    else if (name == "adapter-fx") cfg.adapter_variant = AdapterVariant::adapter_fx;
    else if (name == "adapter-fsem") cfg.adapter_variant = AdapterVariant::adapter_fsem;
    else if (name == "no-semantic") cfg.semantic_prompts = false;
    else if (name == "no-geometric") cfg.geometric_prompts = false;
    else throw ConfigError("unknown ablation '" + name + "'");
  }
}

std::vector<AblationRow> ablation_rows(const RunConfig& base, const std::string& which,
                                       const std::vector<int64_t>& values) {
  auto with = [&](const std::string& label, const std::string& ablate) {
    AblationRow r{label, base};
    if (!ablate.empty()) apply_ablation(r.cfg, ablate);
    return r;
  };
  std::vector<AblationRow> rows;
  if (which == "mcfm") {
    rows = {with("full", ""), with("w/o MCFM", "no-mcfm"), with("w/ CD", "cd")};
  } else if (which == "madapter") {
    rows = {with("full", ""), with("w/o Fusion", "no-fusion"), with("w/ Adapter_f_x", "adapter-fx"),
            with("w/ Adapter_f_sem", "adapter-fsem"), with("w/o MAdapter", "no-madapter")};
  } else if (which == "prompts") {
    rows = {with("full", ""), with("w/o Semantic", "no-semantic"),
            with("w/o Geometric", "no-geometric")};
  } else if (which == "queries") {
    const std::vector<int64_t> ns = values.empty() ? std::vector<int64_t>{1, 10, 30, 50} : values;
    for (int64_t n : ns) {
      AblationRow r{"N=" + std::to_string(n), base};
      r.cfg.queries = n;
      rows.push_back(r);
    }
  } else if (which == "level") {
    const std::vector<int64_t> ls = values.empty() ? std::vector<int64_t>{1, 2, 3, 4} : values;
    for (int64_t l : ls) {
      AblationRow r{"level " + std::to_string(l), base};
      r.cfg.feature_level = l;
      rows.push_back(r);
    }
  } else {
    throw ConfigError("--which must be one of mcfm, madapter, prompts, queries, level; got '" +
                      which + "'");
  }
  for (const auto& r : rows) r.cfg.validate();
  return rows;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-modal salient object detection on a frozen promptable segmenter"};
  app.name("sammese");
  app.require_subcommand(1);

  CommonOptions train_o, predict_o, ablate_o;
  auto* train_cmd = app.add_subcommand("train", "Train the adapters, fusion module and prompt generator");
  add_common(train_cmd, train_o);

  auto* predict_cmd = app.add_subcommand("predict", "Write saliency maps for image pairs");
  add_common(predict_cmd, predict_o);
  std::string rgb, aux;
  bool dump_prompts = false, coarse = false, heatmaps = false;
  predict_cmd->add_option("--rgb", rgb, "Single RGB image");
  predict_cmd->add_option("--aux", aux, "Matching thermal / depth image");
  predict_cmd->add_flag("--dump-prompts", dump_prompts, "Write derived boxes / points as JSON");
  predict_cmd->add_flag("--coarse", coarse, "Also write the coarse saliency maps");
  predict_cmd->add_flag("--heatmaps", heatmaps, "Also write channel-mean heatmaps of f_sem");

  auto* eval_cmd = app.add_subcommand("eval", "Score saliency maps against ground truth");
  std::string pred_dir, gt_dir, eval_data, eval_out;
  eval_cmd->add_option("--pred", pred_dir, "Directory of predicted maps");
  eval_cmd->add_option("--gt", gt_dir, "Directory of ground-truth masks");
  eval_cmd->add_option("--data", eval_data, "Dataset root; GT/ is used when --gt is absent");
  eval_cmd->add_option("--out", eval_out, "CSV file or directory for per-image scores");

  auto* ablate_cmd = app.add_subcommand("ablate", "Train and score ablation variants");
  add_common(ablate_cmd, ablate_o);
  std::string which, values, test_root;
  ablate_cmd->add_option("--which", which, "mcfm | madapter | prompts | queries | level")->required();
  ablate_cmd->add_option("--values", values, "Comma list for the queries / level sweeps");
  ablate_cmd->add_option("--test", test_root, "Evaluation dataset root (default: training data)");

  auto* synth_cmd = app.add_subcommand("synth-data", "Write a synthetic paired dataset");
  std::string synth_out, corruption = "none", modality = "thermal";
  int64_t n = 4, size = 64, synth_seed = 0;
  synth_cmd->add_option("--out", synth_out, "Dataset root to create")->required();
  synth_cmd->add_option("--n", n, "Number of pairs")->check(CLI::Range(int64_t{1}, int64_t{1000000}));
  synth_cmd->add_option("--size", size, "Image side")->check(CLI::Range(int64_t{32}, int64_t{8192}));
  synth_cmd->add_option("--seed", synth_seed, "Random seed")->check(CLI::NonNegativeNumber);
  synth_cmd->add_option("--corruption", corruption, "none | rgb_dark | aux_noisy")
      ->check(CLI::IsMember({"none", "rgb_dark", "aux_noisy"}));
  synth_cmd->add_option("--modality", modality, "thermal | depth")
      ->check(CLI::IsMember({"thermal", "depth"}));

  std::vector<const char*> argv;
  argv.push_back("sammese");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (*train_cmd) return cmd_train(train_o, out);
    if (*predict_cmd) return cmd_predict(predict_o, rgb, aux, dump_prompts, coarse, heatmaps, out, err);
    if (*eval_cmd) return cmd_eval(pred_dir, gt_dir, eval_data, eval_out, out);
    if (*ablate_cmd) return cmd_ablate(ablate_o, which, values, test_root, out);
    if (*synth_cmd) return cmd_synth(synth_out, n, size, synth_seed, corruption, modality, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

int run_cli(int argc, const char* const* argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace sammese
