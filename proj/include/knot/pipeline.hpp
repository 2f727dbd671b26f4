#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "knot/confidence.hpp"
#include "knot/data_sim.hpp"
#include "knot/divergences.hpp"
#include "knot/label_space.hpp"
#include "knot/model.hpp"

namespace knot {

/// Declarative description of one experiment. Every field has a default, so
/// a config file only needs the fields it changes.
struct ExperimentConfig {
  std::string task = "SA";  // SA | ERC | NLI | path to a label-space JSON
  std::size_t feature_dim = 8;
  double noise_std = 0.6;
  FederationLayout layout;
  SinkhornConfig sinkhorn;
  OptimizerConfig optimizer;  // distillation
  OptimizerConfig pretrain{0.3, 32, 60, 0};  // CE training of locals and the global model
  std::vector<WeightScheme> schemes{WeightScheme::A, WeightScheme::D, WeightScheme::U,
                                    WeightScheme::E};
  std::vector<Divergence> divergences{Divergence::KL, Divergence::Sinkhorn};
  bool lwf = true;
  std::size_t n_noise_samples = 10000;
  std::string primary_metric = "auto";  // auto | macro_f1 | accuracy
  // Fill the wall_time_s column with measured seconds. Off by default so that
  // results files are byte-identical across runs.
  bool record_wall_time = false;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "knot_out";

  void validate() const;
  LabelSpace label_space() const;
  /// "macro_f1" or "accuracy" after resolving "auto" (accuracy for NLI).
  std::string resolved_metric() const;
};

nlohmann::json to_json(const ExperimentConfig& cfg);
/// Missing fields keep their defaults; unknown fields are rejected.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Output file locations under cfg.output_dir.
struct Layout {
  std::filesystem::path root;

  std::filesystem::path data_dir() const { return root / "data"; }
  std::filesystem::path local_train(std::size_t k) const;
  std::filesystem::path local_test(std::size_t k) const;
  std::filesystem::path global_train() const { return data_dir() / "global_train.csv"; }
  std::filesystem::path global_test() const { return data_dir() / "global_test.csv"; }
  std::filesystem::path transfer() const { return data_dir() / "transfer.csv"; }
  std::filesystem::path manifest() const { return data_dir() / "manifest.json"; }

  std::filesystem::path teacher_model(std::size_t k) const;
  std::filesystem::path global_model() const { return root / "models" / "global.json"; }
  std::filesystem::path local_report() const { return root / "models" / "local_report.csv"; }

  std::filesystem::path teacher_bias(std::size_t k) const;
  std::filesystem::path global_bias() const { return root / "biases" / "global.json"; }

  std::filesystem::path student(Divergence d, WeightScheme s) const;
  std::filesystem::path loss_curve(Divergence d, WeightScheme s) const;

  std::filesystem::path results() const { return root / "results.csv"; }
  std::filesystem::path report() const { return root / "report.md"; }
};

/// "local1".."localK", matching teacher ids and evaluation split names.
std::string local_name(std::size_t k);
/// "Sinkhorn-E", "Entropy-A", ...
std::string method_name(Divergence d, WeightScheme s);

inline constexpr const char* kResultsHeader =
    "divergence,scheme,split,metric_primary,sd,seed,wall_time_s";

void cmd_gen_data(const ExperimentConfig& cfg);
void cmd_train_local(const ExperimentConfig& cfg);
void cmd_estimate_bias(const ExperimentConfig& cfg);
void cmd_distill(const ExperimentConfig& cfg);
void cmd_evaluate(const ExperimentConfig& cfg);

struct ResultRow {
  std::string divergence;
  std::string scheme;
  std::string split;
  double metric_primary = 0.0;
  double sd = 0.0;
  std::uint64_t seed = 0;
  double wall_time_s = 0.0;
};

/// Parses a results CSV; throws std::runtime_error if it is empty or malformed.
std::vector<ResultRow> read_results(const std::filesystem::path& path);

/// Markdown table: one row per method (Entropy first, then Sinkhorn, schemes
/// in A/D/U/E order), primary metric then SD per split, the lowest SD in each
/// column in bold.
std::string format_report(const std::vector<ResultRow>& rows, const std::string& metric_label);

/// Reads `results`, writes the table to `out`. Throws on malformed input.
void cmd_report(const std::filesystem::path& results, std::ostream& out);

/// gen-data, train-local, estimate-bias, distill, evaluate in order.
void run_pipeline(const ExperimentConfig& cfg);

}  // namespace knot
