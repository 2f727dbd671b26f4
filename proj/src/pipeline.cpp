#include "knot/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "knot/distillation.hpp"
#include "knot/io.hpp"
#include "knot/metrics.hpp"

namespace knot {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Sub-streams of the experiment seed.
enum Stream : std::uint64_t {
  kTeacherInit = 100,
  kTeacherTrain = 200,
  kGlobalInit = 300,
  kGlobalTrain = 301,
  kTeacherNoise = 400,
  kGlobalNoise = 500,
  kDistill = 600,
};

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t extra = 0) {
  return make_rng(seed ^ (extra * 0x9E3779B97F4A7C15ULL), stream)();
}

void reject_unknown(const json& j, std::initializer_list<const char*> known, const char* where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find_if(known.begin(), known.end(),
                     [&](const char* k) { return it.key() == k; }) == known.end()) {
      throw std::invalid_argument(std::string("config: unknown field '") + it.key() + "' in " +
                                  where);
    }
  }
}

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

json optimizer_json(const OptimizerConfig& o) {
  return {{"learning_rate", o.learning_rate},
          {"batch_size", o.batch_size},
          {"epochs", o.epochs},
          {"seed", o.seed}};
}

OptimizerConfig optimizer_from(const json& j, OptimizerConfig o, const char* where) {
  reject_unknown(j, {"learning_rate", "batch_size", "epochs", "seed"}, where);
  read_opt(j, "learning_rate", o.learning_rate);
  read_opt(j, "batch_size", o.batch_size);
  read_opt(j, "epochs", o.epochs);
  read_opt(j, "seed", o.seed);
  return o;
}

std::vector<LabeledDataset> load_local(const Layout& paths, std::size_t n_locals, bool test) {
  std::vector<LabeledDataset> out;
  for (std::size_t k = 0; k < n_locals; ++k) {
    const auto p = test ? paths.local_test(k) : paths.local_train(k);
    if (!fs::exists(p)) {
      throw std::runtime_error("missing dataset " + p.string() + " (run gen-data first)");
    }
    out.push_back(read_labeled_csv(p));
  }
  return out;
}

LinearSoftmaxClassifier load_required_model(const fs::path& p, const char* hint) {
  if (!fs::exists(p)) throw std::runtime_error("missing model " + p.string() + " (" + hint + ")");
  return load_model(p);
}

FeatureMatrix load_transfer(const Layout& paths) {
  if (!fs::exists(paths.transfer())) {
    throw std::runtime_error("missing transfer set " + paths.transfer().string() +
                             " (run gen-data first)");
  }
  return read_unlabeled_csv(paths.transfer());
}

}  // namespace

// --- config -----------------------------------------------------------------

void ExperimentConfig::validate() const {
  if (schemes.empty()) throw std::invalid_argument("config: schemes must be non-empty");
  if (divergences.empty()) throw std::invalid_argument("config: divergences must be non-empty");
  if (n_noise_samples < 1) throw std::invalid_argument("config: n_noise_samples must be >= 1");
  if (primary_metric != "auto" && primary_metric != "macro_f1" && primary_metric != "accuracy") {
    throw std::invalid_argument("config: primary_metric must be auto, macro_f1 or accuracy");
  }
  if (task != "SA" && task != "ERC" && task != "NLI" && !fs::exists(task)) {
    throw std::invalid_argument("config: task '" + task +
                                "' is neither SA/ERC/NLI nor an existing label-space file");
  }
  layout.validate();
  sinkhorn.validate();
  optimizer.validate();
  pretrain.validate();
}

LabelSpace ExperimentConfig::label_space() const {
  if (task == "SA" || task == "ERC" || task == "NLI") return builtin_space(task);
  return load_label_space(task);
}

std::string ExperimentConfig::resolved_metric() const {
  if (primary_metric != "auto") return primary_metric;
  return label_space().name() == "NLI" ? "accuracy" : "macro_f1";
}

json to_json(const ExperimentConfig& cfg) {
  std::vector<std::string> schemes;
  for (auto s : cfg.schemes) schemes.emplace_back(to_string(s));
  std::vector<std::string> divs;
  for (auto d : cfg.divergences) divs.emplace_back(to_string(d));
  return {
      {"task", cfg.task},
      {"feature_dim", cfg.feature_dim},
      {"noise_std", cfg.noise_std},
      {"layout",
       {{"n_locals", cfg.layout.n_locals},
        {"dirichlet_alpha", cfg.layout.dirichlet_alpha},
        {"local_sizes", cfg.layout.local_sizes},
        {"global_size", cfg.layout.global_size},
        {"transfer_size", cfg.layout.transfer_size},
        {"test_size", cfg.layout.test_size},
        {"pool_per_class", cfg.layout.pool_per_class}}},
      {"sinkhorn",
       {{"epsilon", cfg.sinkhorn.epsilon},
        {"max_iters", cfg.sinkhorn.max_iters},
        {"tol", cfg.sinkhorn.tol},
        {"eps_scaling", cfg.sinkhorn.eps_scaling},
        {"newton", cfg.sinkhorn.newton}}},
      {"optimizer", optimizer_json(cfg.optimizer)},
      {"pretrain", optimizer_json(cfg.pretrain)},
      {"schemes", schemes},
      {"divergences", divs},
      {"lwf", cfg.lwf},
      {"n_noise_samples", cfg.n_noise_samples},
      {"primary_metric", cfg.primary_metric},
      {"record_wall_time", cfg.record_wall_time},
      {"seed", cfg.seed},
      {"output_dir", cfg.output_dir.string()},
  };
}

ExperimentConfig config_from_json(const json& j) {
  reject_unknown(j,
                 {"task", "feature_dim", "noise_std", "layout", "sinkhorn", "optimizer",
                  "pretrain", "schemes", "divergences", "lwf", "n_noise_samples",
                  "primary_metric", "record_wall_time", "seed", "output_dir"},
                 "config");
  ExperimentConfig cfg;
  read_opt(j, "task", cfg.task);
  read_opt(j, "feature_dim", cfg.feature_dim);
  read_opt(j, "noise_std", cfg.noise_std);
  if (j.contains("layout")) {
    const auto& l = j.at("layout");
    reject_unknown(l,
                   {"n_locals", "dirichlet_alpha", "local_sizes", "global_size",
                    "transfer_size", "test_size", "pool_per_class"},
                   "layout");
    read_opt(l, "n_locals", cfg.layout.n_locals);
    read_opt(l, "dirichlet_alpha", cfg.layout.dirichlet_alpha);
    read_opt(l, "local_sizes", cfg.layout.local_sizes);
    read_opt(l, "global_size", cfg.layout.global_size);
    read_opt(l, "transfer_size", cfg.layout.transfer_size);
    read_opt(l, "test_size", cfg.layout.test_size);
    read_opt(l, "pool_per_class", cfg.layout.pool_per_class);
  }
  if (j.contains("sinkhorn")) {
    const auto& s = j.at("sinkhorn");
    reject_unknown(s, {"epsilon", "max_iters", "tol", "eps_scaling", "newton"}, "sinkhorn");
    read_opt(s, "epsilon", cfg.sinkhorn.epsilon);
    read_opt(s, "max_iters", cfg.sinkhorn.max_iters);
    read_opt(s, "tol", cfg.sinkhorn.tol);
    read_opt(s, "eps_scaling", cfg.sinkhorn.eps_scaling);
    read_opt(s, "newton", cfg.sinkhorn.newton);
  }
  if (j.contains("optimizer")) cfg.optimizer = optimizer_from(j.at("optimizer"), cfg.optimizer, "optimizer");
  if (j.contains("pretrain")) cfg.pretrain = optimizer_from(j.at("pretrain"), cfg.pretrain, "pretrain");
  if (j.contains("schemes")) {
    cfg.schemes.clear();
    for (const auto& s : j.at("schemes")) cfg.schemes.push_back(parse_scheme(s.get<std::string>()));
  }
  if (j.contains("divergences")) {
    cfg.divergences.clear();
    for (const auto& d : j.at("divergences")) {
      cfg.divergences.push_back(parse_divergence(d.get<std::string>()));
    }
  }
  read_opt(j, "lwf", cfg.lwf);
  read_opt(j, "n_noise_samples", cfg.n_noise_samples);
  read_opt(j, "primary_metric", cfg.primary_metric);
  read_opt(j, "record_wall_time", cfg.record_wall_time);
  read_opt(j, "seed", cfg.seed);
  if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();
  return cfg;
}

ExperimentConfig load_config(const fs::path& path) { return config_from_json(read_json(path)); }

// --- layout -----------------------------------------------------------------

std::string local_name(std::size_t k) { return "local" + std::to_string(k + 1); }

std::string method_name(Divergence d, WeightScheme s) {
  return std::string(d == Divergence::Sinkhorn ? "Sinkhorn" : "Entropy") + "-" +
         std::string(to_string(s));
}

fs::path Layout::local_train(std::size_t k) const {
  return data_dir() / (local_name(k) + "_train.csv");
}
fs::path Layout::local_test(std::size_t k) const {
  return data_dir() / (local_name(k) + "_test.csv");
}
fs::path Layout::teacher_model(std::size_t k) const {
  return root / "models" / (local_name(k) + ".json");
}
fs::path Layout::teacher_bias(std::size_t k) const {
  return root / "biases" / (local_name(k) + ".json");
}
fs::path Layout::student(Divergence d, WeightScheme s) const {
  return root / "students" /
         (std::string(to_string(d)) + "-" + std::string(to_string(s)) + ".json");
}
fs::path Layout::loss_curve(Divergence d, WeightScheme s) const {
  return root / "curves" / (std::string(to_string(d)) + "-" + std::string(to_string(s)) + ".csv");
}

// --- subcommands ------------------------------------------------------------

void cmd_gen_data(const ExperimentConfig& cfg) {
  cfg.validate();
  const Layout paths{cfg.output_dir};
  const auto task = make_task(cfg.label_space(), cfg.feature_dim, cfg.noise_std, cfg.seed);
  const auto data = partition_non_iid(task, cfg.layout);

  json files = json::array();
  auto record = [&](const fs::path& p, std::size_t rows, bool labeled) {
    files.push_back({{"file", fs::relative(p, paths.data_dir()).string()},
                     {"rows", rows},
                     {"labeled", labeled}});
  };
  for (std::size_t k = 0; k < data.local_train.size(); ++k) {
    write_csv(paths.local_train(k), data.local_train[k]);
    record(paths.local_train(k), data.local_train[k].size(), true);
    write_csv(paths.local_test(k), data.local_test[k]);
    record(paths.local_test(k), data.local_test[k].size(), true);
  }
  write_csv(paths.global_train(), data.global_train);
  record(paths.global_train(), data.global_train.size(), true);
  write_csv(paths.global_test(), data.global_test);
  record(paths.global_test(), data.global_test.size(), true);
  write_csv(paths.transfer(), data.transfer);
  record(paths.transfer(), data.transfer.rows(), false);

  write_json_atomic(paths.manifest(), {{"seed", cfg.seed},
                                       {"task", task.space.name()},
                                       {"feature_dim", cfg.feature_dim},
                                       {"local_proportions", data.local_proportions},
                                       {"files", files}});
}

void cmd_train_local(const ExperimentConfig& cfg) {
  cfg.validate();
  const Layout paths{cfg.output_dir};
  const auto space = cfg.label_space();
  const auto train = load_local(paths, cfg.layout.n_locals, false);
  const auto test = load_local(paths, cfg.layout.n_locals, true);
  const bool use_acc = cfg.resolved_metric() == "accuracy";

  std::ostringstream report;
  report << "model,train_size,test_split,score\n";
  for (std::size_t k = 0; k < train.size(); ++k) {
    auto model = LinearSoftmaxClassifier::random_init(space, cfg.feature_dim,
                                                      derive_seed(cfg.seed, kTeacherInit, k));
    auto opt = cfg.pretrain;
    opt.seed = derive_seed(cfg.seed ^ cfg.pretrain.seed, kTeacherTrain, k);
    train_ce(model, train[k], opt);
    save_model(paths.teacher_model(k), model);
    const auto r = evaluate(model, test[k]);
    report << local_name(k) << ',' << train[k].size() << ',' << local_name(k) << ','
           << format_double(use_acc ? r.accuracy : r.macro_f1) << '\n';
  }

  if (!fs::exists(paths.global_train())) {
    throw std::runtime_error("missing dataset " + paths.global_train().string());
  }
  const auto global_train = read_labeled_csv(paths.global_train());
  const auto global_test = read_labeled_csv(paths.global_test());
  auto global = LinearSoftmaxClassifier::random_init(space, cfg.feature_dim,
                                                     derive_seed(cfg.seed, kGlobalInit));
  auto opt = cfg.pretrain;
  opt.seed = derive_seed(cfg.seed ^ cfg.pretrain.seed, kGlobalTrain);
  train_ce(global, global_train, opt);
  save_model(paths.global_model(), global);
  const auto r = evaluate(global, global_test);
  report << "global," << global_train.size() << ",global,"
         << format_double(use_acc ? r.accuracy : r.macro_f1) << '\n';
  write_file_atomic(paths.local_report(), report.str());
}

void cmd_estimate_bias(const ExperimentConfig& cfg) {
  cfg.validate();
  const Layout paths{cfg.output_dir};
  const auto transfer = load_transfer(paths);
  for (std::size_t k = 0; k < cfg.layout.n_locals; ++k) {
    const auto model = load_required_model(paths.teacher_model(k), "run train-local first");
    auto noise = noise_sampler(transfer, derive_seed(cfg.seed, kTeacherNoise, k));
    save_bias(paths.teacher_bias(k),
              estimate_bias(local_name(k), model.as_predictor(), noise, cfg.n_noise_samples));
  }
  const auto global = load_required_model(paths.global_model(), "run train-local first");
  auto noise = noise_sampler(transfer, derive_seed(cfg.seed, kGlobalNoise));
  save_bias(paths.global_bias(),
            estimate_bias("lwf", global.as_predictor(), noise, cfg.n_noise_samples));
}

namespace {

std::optional<ProbabilityBias> maybe_bias(const fs::path& p) {
  if (!fs::exists(p)) return std::nullopt;
  return load_bias(p);
}

}  // namespace

void cmd_distill(const ExperimentConfig& cfg) {
  cfg.validate();
  const Layout paths{cfg.output_dir};
  const auto transfer = load_transfer(paths);
  const auto global = load_required_model(paths.global_model(), "run train-local first");

  // Only prediction functions leave this block; the student side never sees
  // teacher parameters or teacher data.
  std::vector<Teacher> teachers;
  for (std::size_t k = 0; k < cfg.layout.n_locals; ++k) {
    const auto model = load_required_model(paths.teacher_model(k), "run train-local first");
    Teacher t;
    t.id = local_name(k);
    t.predict = model.as_predictor();
    t.bias = maybe_bias(paths.teacher_bias(k));
    t.dataset_size = cfg.layout.local_sizes[k];
    teachers.push_back(std::move(t));
  }

  for (auto d : cfg.divergences) {
    for (auto s : cfg.schemes) {
      TeacherEnsemble ensemble{teachers, s, false};
      if (cfg.lwf) {
        ensemble = augment_with_lwf(std::move(ensemble), global.as_predictor(), transfer,
                                    cfg.layout.global_size, maybe_bias(paths.global_bias()));
      }
      if (s == WeightScheme::E) {
        for (const auto& t : ensemble.teachers) {
          if (!t.bias) {
            throw std::runtime_error("scheme E needs the probability bias of teacher '" + t.id +
                                     "'; run estimate-bias first");
          }
        }
      }
      auto student = global;
      auto opt = cfg.optimizer;
      opt.seed = derive_seed(cfg.seed ^ cfg.optimizer.seed, kDistill);
      const auto hist = distill(student, ensemble, transfer, d, cfg.sinkhorn, opt);
      save_model(paths.student(d, s), student);

      std::ostringstream curve;
      curve << "epoch,mean_loss,divergence,scheme\n";
      for (std::size_t e = 0; e < hist.epoch_loss.size(); ++e) {
        curve << e << ',' << format_double(hist.epoch_loss[e]) << ',' << to_string(d) << ','
              << to_string(s) << '\n';
      }
      write_file_atomic(paths.loss_curve(d, s), curve.str());
    }
  }
}

void cmd_evaluate(const ExperimentConfig& cfg) {
  cfg.validate();
  const Layout paths{cfg.output_dir};
  const auto tests = load_local(paths, cfg.layout.n_locals, true);
  const auto global_test = read_labeled_csv(paths.global_test());
  const bool use_acc = cfg.resolved_metric() == "accuracy";

  std::vector<std::pair<std::string, LabeledDataset>> splits;
  LabeledDataset pooled{FeatureMatrix(cfg.feature_dim), {}};
  auto add_to_pool = [&](const LabeledDataset& d) {
    for (std::size_t i = 0; i < d.size(); ++i) {
      pooled.x.push_back(d.x.row(i));
      pooled.y.push_back(d.y[i]);
    }
  };
  for (std::size_t k = 0; k < tests.size(); ++k) {
    splits.emplace_back(local_name(k), tests[k]);
    add_to_pool(tests[k]);
  }
  splits.emplace_back("global", global_test);
  add_to_pool(global_test);
  splits.emplace_back("ALL", std::move(pooled));

  std::ostringstream out;
  out << kResultsHeader << '\n';
  for (auto d : cfg.divergences) {
    for (auto s : cfg.schemes) {
      const auto student = load_required_model(paths.student(d, s), "run distill first");
      for (const auto& [name, data] : splits) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto r = evaluate(student, data);
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        out << to_string(d) << ',' << to_string(s) << ',' << name << ','
            << format_double(use_acc ? r.accuracy : r.macro_f1) << ',' << format_double(r.sd)
            << ',' << cfg.seed << ',' << format_double(cfg.record_wall_time ? secs : 0.0)
            << '\n';
      }
    }
  }
  write_file_atomic(paths.results(), out.str());
}

// --- report -----------------------------------------------------------------

std::vector<ResultRow> read_results(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.empty()) {
    throw std::runtime_error(path.string() + ": empty results file");
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kResultsHeader) {
    throw std::runtime_error(path.string() + ": unexpected header '" + line + "'");
  }
  std::vector<ResultRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 7) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": expected 7 columns");
    }
    try {
      ResultRow r;
      r.divergence = cells[0];
      r.scheme = cells[1];
      r.split = cells[2];
      r.metric_primary = parse_double(cells[3]);
      r.sd = parse_double(cells[4]);
      r.seed = static_cast<std::uint64_t>(std::stoull(cells[5]));
      r.wall_time_s = parse_double(cells[6]);
      parse_divergence(r.divergence);
      parse_scheme(r.scheme);
      rows.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (rows.empty()) throw std::runtime_error(path.string() + ": no result rows");
  return rows;
}

std::string format_report(const std::vector<ResultRow>& rows, const std::string& metric_label) {
  // Methods in table order; splits in first-seen order.
  std::vector<std::pair<Divergence, WeightScheme>> methods;
  std::vector<std::string> splits;
  std::map<std::pair<std::string, std::string>, const ResultRow*> cell;
  for (const auto& r : rows) {
    const auto m = std::make_pair(parse_divergence(r.divergence), parse_scheme(r.scheme));
    if (std::find(methods.begin(), methods.end(), m) == methods.end()) methods.push_back(m);
    if (std::find(splits.begin(), splits.end(), r.split) == splits.end()) splits.push_back(r.split);
    cell[{method_name(m.first, m.second), r.split}] = &r;
  }
  std::sort(methods.begin(), methods.end(), [](const auto& a, const auto& b) {
    const int da = a.first == Divergence::KL ? 0 : 1;
    const int db = b.first == Divergence::KL ? 0 : 1;
    if (da != db) return da < db;
    return static_cast<int>(a.second) < static_cast<int>(b.second);
  });

  std::map<std::string, double> min_sd;
  for (const auto& s : splits) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& m : methods) {
      auto it = cell.find({method_name(m.first, m.second), s});
      if (it != cell.end()) best = std::min(best, it->second->sd);
    }
    min_sd[s] = best;
  }

  auto fixed = [](double v) {
    std::ostringstream o;
    o << std::fixed << std::setprecision(4) << v;
    return o.str();
  };

  std::ostringstream out;
  out << "| Algorithm |";
  for (const auto& s : splits) out << ' ' << metric_label << ' ' << s << " |";
  for (const auto& s : splits) out << " SD " << s << " |";
  out << "\n|---|";
  for (std::size_t i = 0; i < 2 * splits.size(); ++i) out << "---:|";
  out << '\n';
  for (const auto& m : methods) {
    const auto name = method_name(m.first, m.second);
    out << "| " << name << " |";
    for (const auto& s : splits) {
      auto it = cell.find({name, s});
      out << ' ' << (it == cell.end() ? std::string("-") : fixed(it->second->metric_primary))
          << " |";
    }
    for (const auto& s : splits) {
      auto it = cell.find({name, s});
      if (it == cell.end()) {
        out << " - |";
      } else if (it->second->sd == min_sd[s]) {
        out << " **" << fixed(it->second->sd) << "** |";
      } else {
        out << ' ' << fixed(it->second->sd) << " |";
      }
    }
    out << '\n';
  }
  return out.str();
}

void cmd_report(const fs::path& results, std::ostream& out) {
  out << format_report(read_results(results), "Score");
}

void run_pipeline(const ExperimentConfig& cfg) {
  cmd_gen_data(cfg);
  cmd_train_local(cfg);
  cmd_estimate_bias(cfg);
  cmd_distill(cfg);
  cmd_evaluate(cfg);
}

}  // namespace knot
