#pragma once

#include "p2d/corpus.hpp"
#include "p2d/translation_gan.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace p2d {

inline constexpr const char* kToolVersion = "p2d 1.0.0";

struct EncoderConfig {
  std::string kind = "stub";  // stub | command
  int dim = 64;
  std::string program;        // command encoders
  std::string model_version;
};

struct RefineStageConfig {
  std::string backend = "stub";  // stub | external:PROGRAM
  int steps = 50;
  double strength = 0.6;
};

struct DepthStageConfig {
  std::string backend = "stub";  // stub | external:PROGRAM
  bool mesh = true;
  double pitch_mm = 0.2;
  double relief_height_mm = 8.0;
  double base_thickness_mm = 2.0;
};

struct PipelineConfig {
  static constexpr int kSchemaVersion = 1;

  std::filesystem::path paintings_manifest;
  std::filesystem::path photos_manifest;
  std::optional<std::filesystem::path> dictionary;  // built-in default when empty
  int k = 3;
  double temperature = 0.07;
  EncoderConfig encoder;
  TrainConfig train;
  RefineStageConfig refine;
  DepthStageConfig depth;
  std::filesystem::path output_root;
  std::uint64_t seed = 0;
  unsigned workers = 0;
  std::optional<std::filesystem::path> cache_root;  // defaults to $P2D_CACHE, else output_root/cache

  /// Relative paths resolve against base_dir. Throws InvalidConfig.
  static PipelineConfig from_json(const std::string& text, const std::filesystem::path& base_dir = {});
  static PipelineConfig load(const std::filesystem::path& path);
  std::string to_json() const;

  /// Checks that referenced inputs exist and values are in range. Throws InvalidConfig.
  void validate() const;
  std::string hash() const;
};

struct ItemRecord {
  std::string painting_id;
  std::string painting_path;
  std::string pseudo_real_id;
  std::string real_scene_id;
  std::string real_scene_path;
  std::string depth_path;
  std::string mesh_path;
  double structure_score = 0.0;
  std::vector<std::string> executed;  // stages that ran (not skipped) this time
};

struct StageFailure {
  std::string painting_id;  // empty for global stages
  std::string stage;
  std::string message;
};

struct RunRecord {
  std::string run_id;
  std::string config_hash;
  std::string started_at;
  std::string finished_at;
  int k = 0;
  std::filesystem::path run_dir;
  std::map<std::string, std::string> tool_versions;
  std::map<std::string, double> stage_seconds;
  std::map<std::string, int> stage_executions;
  std::map<std::string, int> stage_skips;
  std::vector<ItemRecord> items;
  std::vector<StageFailure> failures;
  std::vector<double> match_scores;

  bool complete() const { return failures.empty(); }
  int executions(const std::string& stage) const;
  const ItemRecord* item(const std::string& painting_id) const;

  std::string to_json() const;
  static RunRecord from_json(const std::string& text);
  static RunRecord load(const std::filesystem::path& path);
};

/// Stages: match, train (global, exclusive), then per painting translate, refine,
/// depth and mesh on a bounded worker pool. A stage is skipped when its stamp's input
/// key matches and its outputs still hash to the recorded values. Item failures are
/// recorded and do not stop other items.
RunRecord run_full(const PipelineConfig& config);

struct SweepResult {
  std::vector<RunRecord> runs;
  std::vector<std::string> warnings;
  std::filesystem::path comparison_sheet;
};

/// One isolated run per distinct K under output_root/k<K>, plus output_root/sweep.csv.
SweepResult k_sweep(const PipelineConfig& config, std::vector<int> k_values);

}  // namespace p2d
