#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "duet/duet.hpp"
#include "duet/synth.hpp"

namespace duet {

/// Everything a run depends on, grouped the way the config file is:
///   [data] title_len desc_len   [local] dim_word window dim_local max_history
///   [global] dim_entity sample_size   [train] epochs batch_size lr gamma neg_ratio seed
///   [eval] neighbor_cap
struct RunConfig {
  TextConfig text;
  TrainConfig train;

  /// Canonical text with every value explicit; parsing it gives back the same config.
  std::string to_ini() const;
  /// Unknown sections or keys and malformed values raise ConfigError.
  static RunConfig from_ini(const std::string& text, const RunConfig& base = {});
  static RunConfig load(const std::filesystem::path& path);
  /// 16 hex digits of FNV-1a over to_ini().
  std::string hash() const;
  void validate() const;
};

struct PrepareArgs {
  std::filesystem::path interactions;
  std::filesystem::path items;
  std::optional<std::filesystem::path> triples;
  std::filesystem::path out;
  PrepareConfig config;
};

struct LoadedRun {
  RunConfig config;
  Dataset data;
  UnifiedRelationGraph urg;
  ParamStore params;
};

struct PredictRow {
  std::string item_id;
  Prediction p;
};

inline constexpr const char* kCheckpointFile = "checkpoint.bin";

/// Prepared dataset directory plus stats.json; returns the stats.
DatasetStats cmd_prepare(const PrepareArgs& args);
/// Writes checkpoint.bin, its JSON sidecar, train_log.csv and config.ini into `out`.
TrainResult cmd_train(const std::filesystem::path& data_dir, const std::filesystem::path& out, const RunConfig& cfg,
                      std::ostream* progress = nullptr);
/// Writes report.json and report.csv into `out`.
MetricsReport cmd_evaluate(const std::filesystem::path& data_dir, const std::filesystem::path& checkpoint,
                           const std::filesystem::path& out, FusionMode mode = FusionMode::kDuet);
/// Top-k unseen items for `user_id`, sorted by p_f descending then item id.
std::vector<PredictRow> cmd_predict(const std::filesystem::path& data_dir, const std::filesystem::path& checkpoint,
                                    const std::string& user_id, std::size_t topk);
/// One train + evaluate per value under out/<param>=<value>/, summarised in out/sweep.csv.
std::vector<MetricsReport> cmd_sweep(const std::filesystem::path& data_dir, const std::filesystem::path& out,
                                     const std::string& param, const std::vector<std::string>& values,
                                     const RunConfig& base, std::ostream* progress = nullptr);
void cmd_synth(const SynthConfig& cfg, const std::filesystem::path& out);

/// Parameter names accepted by cmd_sweep.
const std::vector<std::string>& sweep_parameters();
/// Copy of `cfg` with one sweepable parameter set; ConfigError for unknown names or bad values.
RunConfig with_parameter(RunConfig cfg, const std::string& param, const std::string& value);

/// Reads a checkpoint, its sidecar config, and the dataset it was trained on.
LoadedRun load_run(const std::filesystem::path& data_dir, const std::filesystem::path& checkpoint);
std::filesystem::path sidecar_path(const std::filesystem::path& checkpoint);

std::string format_predictions(const std::vector<PredictRow>& rows);

}  // namespace duet
