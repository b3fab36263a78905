#include "p2d/pipeline.hpp"

#include "p2d/depth.hpp"
#include "p2d/diffusion_refiner.hpp"
#include "p2d/encoders.hpp"
#include "p2d/error.hpp"
#include "p2d/hash.hpp"
#include "p2d/parallel.hpp"
#include "p2d/rng.hpp"
#include "p2d/semantic_matcher.hpp"
#include "p2d/structure_score.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <mutex>
#include <set>
#include <sstream>

namespace p2d {
namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Config

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return (path.is_absolute() || base.empty() ? path : base / path).lexically_normal();
}

std::string read_all(const fs::path& path, ErrorCode missing) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(missing, "cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_all(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    out << text;
  }
  fs::rename(tmp, path);
}

}  // namespace

PipelineConfig PipelineConfig::from_json(const std::string& text, const fs::path& base_dir) {
  PipelineConfig c;
  try {
    const json j = json::parse(text);
    if (j.value("schema_version", 0) != kSchemaVersion)
      throw Error(ErrorCode::InvalidConfig, "schema_version must be " + std::to_string(kSchemaVersion));
    c.paintings_manifest = resolve(base_dir, j.at("paintings").get<std::string>());
    c.photos_manifest = resolve(base_dir, j.at("photos").get<std::string>());
    if (j.contains("dictionary") && !j["dictionary"].is_null())
      c.dictionary = resolve(base_dir, j["dictionary"].get<std::string>());
    c.k = j.value("k", c.k);
    c.temperature = j.value("temperature", c.temperature);
    if (j.contains("encoder")) {
      const auto& e = j["encoder"];
      c.encoder.kind = e.value("kind", c.encoder.kind);
      c.encoder.dim = e.value("dim", c.encoder.dim);
      c.encoder.program = e.value("program", c.encoder.program);
      c.encoder.model_version = e.value("model_version", c.encoder.model_version);
    }
    if (j.contains("train")) c.train = TrainConfig::from_json(j["train"].dump());
    if (j.contains("refine")) {
      const auto& r = j["refine"];
      c.refine.backend = r.value("backend", c.refine.backend);
      c.refine.steps = r.value("steps", c.refine.steps);
      c.refine.strength = r.value("strength", c.refine.strength);
    }
    if (j.contains("depth")) {
      const auto& d = j["depth"];
      c.depth.backend = d.value("backend", c.depth.backend);
      c.depth.mesh = d.value("mesh", c.depth.mesh);
      c.depth.pitch_mm = d.value("pitch", c.depth.pitch_mm);
      c.depth.relief_height_mm = d.value("height", c.depth.relief_height_mm);
      c.depth.base_thickness_mm = d.value("base", c.depth.base_thickness_mm);
    }
    c.output_root = resolve(base_dir, j.at("output_root").get<std::string>());
    c.seed = j.value("seed", c.seed);
    c.workers = j.value("workers", c.workers);
    if (j.contains("cache_root") && !j["cache_root"].is_null())
      c.cache_root = resolve(base_dir, j["cache_root"].get<std::string>());
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, e.what());
  }
  return c;
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
  return from_json(read_all(path, ErrorCode::InvalidConfig), path.parent_path());
}

std::string PipelineConfig::to_json() const {
  json j = {{"schema_version", kSchemaVersion},
            {"paintings", paintings_manifest.generic_string()},
            {"photos", photos_manifest.generic_string()},
            {"dictionary", dictionary ? json(dictionary->generic_string()) : json(nullptr)},
            {"k", k},
            {"temperature", temperature},
            {"encoder",
             {{"kind", encoder.kind},
              {"dim", encoder.dim},
              {"program", encoder.program},
              {"model_version", encoder.model_version}}},
            {"train", json::parse(train.to_json())},
            {"refine", {{"backend", refine.backend}, {"steps", refine.steps}, {"strength", refine.strength}}},
            {"depth",
             {{"backend", depth.backend},
              {"mesh", depth.mesh},
              {"pitch", depth.pitch_mm},
              {"height", depth.relief_height_mm},
              {"base", depth.base_thickness_mm}}},
            {"output_root", output_root.generic_string()},
            {"seed", seed},
            {"workers", workers},
            {"cache_root", cache_root ? json(cache_root->generic_string()) : json(nullptr)}};
  return j.dump(2);
}

void PipelineConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::InvalidConfig, what); };
  std::error_code ec;
  if (!fs::is_regular_file(paintings_manifest, ec)) fail("paintings manifest not found: " + paintings_manifest.string());
  if (!fs::is_regular_file(photos_manifest, ec)) fail("photos manifest not found: " + photos_manifest.string());
  if (dictionary && !fs::is_regular_file(*dictionary, ec)) fail("dictionary not found: " + dictionary->string());
  if (k < 1) fail("k must be >= 1");
  if (!(temperature > 0)) fail("temperature must be > 0");
  if (encoder.kind != "stub" && encoder.kind != "command") fail("encoder.kind must be stub or command");
  if (encoder.kind == "stub" && encoder.dim < 1) fail("encoder.dim must be >= 1");
  if (encoder.kind == "command" && encoder.program.empty()) fail("encoder.program is required for command encoders");
  train.validate();
  if (refine.steps < 1) fail("refine.steps must be >= 1");
  if (!(refine.strength >= 0 && refine.strength <= 1)) fail("refine.strength must lie in [0,1]");
  if (refine.backend != "stub" && refine.backend.rfind("external:", 0) != 0) fail("unknown refine backend");
  if (depth.backend != "stub" && depth.backend != "luminance" && depth.backend.rfind("external:", 0) != 0)
    fail("unknown depth backend");
  if (depth.mesh && (!(depth.pitch_mm > 0) || !(depth.relief_height_mm > 0) || !(depth.base_thickness_mm > 0)))
    fail("mesh dimensions must be positive");
  if (output_root.empty()) fail("output_root is required");
}

std::string PipelineConfig::hash() const { return sha256_hex(to_json()); }

// ---------------------------------------------------------------------------
// Run record

int RunRecord::executions(const std::string& stage) const {
  const auto it = stage_executions.find(stage);
  return it == stage_executions.end() ? 0 : it->second;
}

const ItemRecord* RunRecord::item(const std::string& painting_id) const {
  for (const auto& i : items)
    if (i.painting_id == painting_id) return &i;
  return nullptr;
}

std::string RunRecord::to_json() const {
  json items_json = json::array();
  for (const auto& i : items)
    items_json.push_back({{"painting_id", i.painting_id},
                          {"painting_path", i.painting_path},
                          {"pseudo_real_id", i.pseudo_real_id},
                          {"real_scene_id", i.real_scene_id},
                          {"real_scene_path", i.real_scene_path},
                          {"depth_path", i.depth_path},
                          {"mesh_path", i.mesh_path},
                          {"structure_score", i.structure_score},
                          {"executed", i.executed}});
  json failures_json = json::array();
  for (const auto& f : failures)
    failures_json.push_back({{"painting_id", f.painting_id}, {"stage", f.stage}, {"message", f.message}});
  const json j = {{"run_id", run_id},
                  {"config_hash", config_hash},
                  {"started_at", started_at},
                  {"finished_at", finished_at},
                  {"k", k},
                  {"run_dir", run_dir.generic_string()},
                  {"tool_versions", tool_versions},
                  {"stage_seconds", stage_seconds},
                  {"stage_executions", stage_executions},
                  {"stage_skips", stage_skips},
                  {"items", items_json},
                  {"failures", failures_json},
                  {"match_scores", match_scores}};
  return j.dump(2);
}

RunRecord RunRecord::from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    RunRecord r;
    r.run_id = j.at("run_id").get<std::string>();
    r.config_hash = j.at("config_hash").get<std::string>();
    r.started_at = j.value("started_at", "");
    r.finished_at = j.value("finished_at", "");
    r.k = j.value("k", 0);
    r.run_dir = j.value("run_dir", "");
    r.tool_versions = j.value("tool_versions", std::map<std::string, std::string>{});
    r.stage_seconds = j.value("stage_seconds", std::map<std::string, double>{});
    r.stage_executions = j.value("stage_executions", std::map<std::string, int>{});
    r.stage_skips = j.value("stage_skips", std::map<std::string, int>{});
    for (const auto& i : j.at("items")) {
      ItemRecord item;
      item.painting_id = i.at("painting_id").get<std::string>();
      item.painting_path = i.value("painting_path", "");
      item.pseudo_real_id = i.value("pseudo_real_id", "");
      item.real_scene_id = i.value("real_scene_id", "");
      item.real_scene_path = i.value("real_scene_path", "");
      item.depth_path = i.value("depth_path", "");
      item.mesh_path = i.value("mesh_path", "");
      item.structure_score = i.value("structure_score", 0.0);
      item.executed = i.value("executed", std::vector<std::string>{});
      r.items.push_back(std::move(item));
    }
    for (const auto& f : j.value("failures", json::array()))
      r.failures.push_back({f.value("painting_id", ""), f.value("stage", ""), f.value("message", "")});
    r.match_scores = j.value("match_scores", std::vector<double>{});
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::IncompatibleManifest, std::string("run record: ") + e.what());
  }
}

RunRecord RunRecord::load(const fs::path& path) { return from_json(read_all(path, ErrorCode::NotFound)); }

// ---------------------------------------------------------------------------
// Stage bookkeeping

namespace {

/// Stamps live under run_dir/stages; output paths are stored relative to run_dir.
class StageLedger {
 public:
  explicit StageLedger(fs::path run_dir) : run_dir_(std::move(run_dir)) {}

  fs::path stamp_path(const std::string& stage, const std::string& item) const {
    return item.empty() ? run_dir_ / "stages" / (stage + ".json") : run_dir_ / "stages" / item / (stage + ".json");
  }

  /// Returns the stamp's extra payload when the stage is up to date.
  std::optional<json> current(const std::string& stage, const std::string& item, const std::string& input_key) const {
    std::ifstream in(stamp_path(stage, item));
    if (!in) return std::nullopt;
    json stamp;
    try {
      in >> stamp;
      if (stamp.at("input_key").get<std::string>() != input_key) return std::nullopt;
      for (const auto& [rel, digest] : stamp.at("outputs").items()) {
        const fs::path file = run_dir_ / rel;
        std::error_code ec;
        if (!fs::is_regular_file(file, ec) || sha256_file(file) != digest.get<std::string>()) return std::nullopt;
      }
    } catch (const std::exception&) {
      return std::nullopt;
    }
    return stamp.value("extra", json::object());
  }

  void record(const std::string& stage, const std::string& item, const std::string& input_key,
              const std::vector<fs::path>& outputs, const json& extra = json::object()) const {
    json out = json::object();
    for (const auto& file : outputs) out[file.lexically_relative(run_dir_).generic_string()] = sha256_file(file);
    write_all(stamp_path(stage, item), json{{"input_key", input_key}, {"outputs", out}, {"extra", extra}}.dump(2));
  }

 private:
  fs::path run_dir_;
};

std::string key_of(std::initializer_list<std::string> parts) {
  std::string text;
  for (const auto& p : parts) {
    text += p;
    text.push_back('\x1f');
  }
  return sha256_hex(text);
}

struct Counters {
  std::mutex mutex;
  RunRecord* record;

  void executed(const std::string& stage, double seconds) {
    std::lock_guard lock(mutex);
    ++record->stage_executions[stage];
    record->stage_seconds[stage] += seconds;
  }
  void skipped(const std::string& stage) {
    std::lock_guard lock(mutex);
    ++record->stage_skips[stage];
  }
  void failed(StageFailure f) {
    std::lock_guard lock(mutex);
    record->failures.push_back(std::move(f));
  }
};

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

/// Serializes calls into backends that declare PerWorker concurrency.
class BackendGate {
 public:
  explicit BackendGate(bool exclusive) : exclusive_(exclusive) {}
  std::unique_lock<std::mutex> enter() {
    return exclusive_ ? std::unique_lock<std::mutex>(mutex_) : std::unique_lock<std::mutex>();
  }

 private:
  bool exclusive_;
  std::mutex mutex_;
};

std::optional<fs::path> effective_cache_root(const PipelineConfig& config) {
  if (config.cache_root) return config.cache_root;
  if (const char* env = std::getenv("P2D_CACHE"); env && *env) return fs::path(env) / "embeddings";
  return config.output_root / "cache";
}

}  // namespace

RunRecord run_full(const PipelineConfig& config) {
  config.validate();
  const fs::path run_dir = config.output_root;
  fs::create_directories(run_dir);

  RunRecord record;
  record.config_hash = config.hash();
  record.run_id = record.config_hash.substr(0, 12);
  record.started_at = utc_timestamp();
  record.k = config.k;
  record.run_dir = run_dir;
  write_all(run_dir / "config.json", config.to_json());
  Counters counters{{}, &record};
  const StageLedger ledger(run_dir);

  const DatasetManifest paintings = load_manifest(config.paintings_manifest);
  const DatasetManifest photos = load_manifest(config.photos_manifest);
  const Dictionary dict = config.dictionary ? load_dictionary(*config.dictionary)
                                            : build_dictionary(default_category_spec(), {}, "default-1");
  const std::string dict_hash = dictionary_hash(dict);

  std::unique_ptr<TextEncoder> text_encoder;
  std::unique_ptr<ImageEncoder> image_encoder;
  if (config.encoder.kind == "command") {
    text_encoder = std::make_unique<CommandTextEncoder>(config.encoder.program, config.encoder.model_version);
    image_encoder = std::make_unique<CommandImageEncoder>(config.encoder.program, config.encoder.model_version);
  } else {
    text_encoder = std::make_unique<HashingTextEncoder>(config.encoder.dim);
    image_encoder = std::make_unique<ProjectionImageEncoder>(config.encoder.dim);
  }
  auto refine_backend = make_refine_backend(config.refine.backend);
  auto depth_backend = make_depth_backend(config.depth.backend);
  record.tool_versions = {{"p2d", kToolVersion},
                          {"text_encoder", text_encoder->version()},
                          {"image_encoder", image_encoder->version()},
                          {"refine_backend", refine_backend->id()},
                          {"depth_backend", depth_backend->id()}};

  auto finish = [&] {
    record.finished_at = utc_timestamp();
    write_all(run_dir / "run_record.json", record.to_json());
    return record;
  };

  // Matching.
  const fs::path matched_path = run_dir / "matched.manifest";
  {
    const std::string key =
        key_of({manifest_hash(paintings), manifest_hash(photos), dict_hash, std::to_string(config.k),
                json(config.temperature).dump(), text_encoder->version(), image_encoder->version()});
    if (ledger.current("match", "", key)) {
      counters.skipped("match");
    } else {
      try {
        Stopwatch sw;
        EmbeddingCache cache(effective_cache_root(config));
        MatchingBackends backends{*text_encoder, *image_encoder, cache, config.temperature, config.workers};
        save_manifest(build_clip_matched_dataset(paintings, photos, dict, config.k, backends), matched_path);
        ledger.record("match", "", key, {matched_path});
        counters.executed("match", sw.seconds());
      } catch (const Error& e) {
        counters.failed({"", "match", e.what()});
        return finish();
      }
    }
  }
  const DatasetManifest matched = load_manifest(matched_path);
  for (const auto& p : matched.pairs) record.match_scores.push_back(p.score);

  // Training: exclusive, single worker.
  const fs::path train_dir = run_dir / "train";
  LoadedCheckpoint checkpoint;
  {
    const std::string key = key_of({manifest_hash(matched), config.train.to_json(), dict_hash});
    try {
      if (auto extra = ledger.current("train", "", key)) {
        checkpoint = load_checkpoint(train_dir, extra->at("step").get<long>());
        counters.skipped("train");
      } else {
        Stopwatch sw;
        fs::remove_all(train_dir);
        TranslatorPair pair = TranslatorPair::create(config.train);
        const TrainResult result = train(pair, matched, config.train, train_dir, dict_hash);
        ledger.record("train", "", key,
                      {result.last_checkpoint / "gen_p2o", result.last_checkpoint / "gen_o2p",
                       result.last_checkpoint / "disc_ori", result.last_checkpoint / "disc_photo",
                       result.last_checkpoint / "meta.json"},
                      {{"step", pair.step}});
        checkpoint = load_checkpoint(train_dir, pair.step);
        counters.executed("train", sw.seconds());
      }
    } catch (const Error& e) {
      counters.failed({"", "train", e.what()});
      return finish();
    }
  }
  const std::string checkpoint_key = sha256_file(checkpoint.directory / "gen_o2p");
  const int image_size = checkpoint.config.image_size;

  // Per-item inference stages.
  const auto painting_records = matched.with_tag(DomainTag::Painting);
  record.items.resize(painting_records.size());
  BackendGate refine_gate(refine_backend->concurrency() == BackendConcurrency::PerWorker);
  BackendGate depth_gate(depth_backend->concurrency() == BackendConcurrency::PerWorker);
  const std::string refine_params = json{{"steps", config.refine.steps},
                                         {"strength", config.refine.strength},
                                         {"seed", config.seed}}
                                        .dump();
  const std::string mesh_params = json{{"pitch", config.depth.pitch_mm},
                                       {"height", config.depth.relief_height_mm},
                                       {"base", config.depth.base_thickness_mm}}
                                      .dump();

  parallel_for(painting_records.size(), config.workers, [&](std::size_t index) {
    const ImageRecord& painting = *painting_records[index];
    ItemRecord& item = record.items[index];
    item.painting_id = painting.id;
    item.painting_path = painting.path;
    const fs::path dir = run_dir / "items" / painting.id;
    const fs::path pseudo_path = dir / "pseudo_real.png";
    const fs::path real_path = dir / "real_scene.png";
    const fs::path depth_path = dir / "depth.png";
    const fs::path mesh_path = dir / "relief.stl";
    std::string stage = "translate";
    try {
      fs::create_directories(dir);
      {
        const std::string key = key_of({painting.checksum, checkpoint_key, std::to_string(image_size)});
        if (ledger.current(stage, painting.id, key)) {
          counters.skipped(stage);
        } else {
          Stopwatch sw;
          write_png(pseudo_path, translate_image(checkpoint.pair, read_png(painting.path), image_size));
          ledger.record(stage, painting.id, key, {pseudo_path});
          counters.executed(stage, sw.seconds());
          item.executed.push_back(stage);
        }
        item.pseudo_real_id = painting.id + ".pseudo_real";
      }

      stage = "refine";
      {
        const std::string key = key_of({painting.checksum, sha256_file(pseudo_path), refine_params, refine_backend->id()});
        if (auto extra = ledger.current(stage, painting.id, key)) {
          item.structure_score = extra->value("structure_score", 0.0);
          counters.skipped(stage);
        } else {
          Stopwatch sw;
          const ImageD reference = read_png(pseudo_path);
          RefineInputs inputs{resize_bilinear(to_rgb(read_png(painting.path)), reference.height(), reference.width()),
                              reference, {}, pseudo_path};
          const RefineParams params{config.refine.steps, config.refine.strength,
                                    config.seed ^ seed_from(painting.id)};
          ImageD out;
          {
            auto lock = refine_gate.enter();
            out = refine_image(inputs, params, *refine_backend);
          }
          write_png(real_path, out);
          item.structure_score = structure_score(read_png(real_path), inputs.content);
          ledger.record(stage, painting.id, key, {real_path}, {{"structure_score", item.structure_score}});
          counters.executed(stage, sw.seconds());
          item.executed.push_back(stage);
        }
        item.real_scene_id = painting.id + ".real_scene";
        item.real_scene_path = real_path.generic_string();
      }

      stage = "depth";
      {
        const std::string key = key_of({sha256_file(real_path), depth_backend->id()});
        if (ledger.current(stage, painting.id, key)) {
          counters.skipped(stage);
        } else {
          Stopwatch sw;
          DepthMap map;
          {
            auto lock = depth_gate.enter();
            map = estimate_depth(read_png(real_path), item.real_scene_id, *depth_backend, real_path);
          }
          export_depth_png16(normalize_depth(std::move(map)), depth_path);
          ledger.record(stage, painting.id, key, {depth_path});
          counters.executed(stage, sw.seconds());
          item.executed.push_back(stage);
        }
        item.depth_path = depth_path.generic_string();
      }

      if (config.depth.mesh) {
        stage = "mesh";
        const std::string key = key_of({sha256_file(depth_path), mesh_params});
        if (ledger.current(stage, painting.id, key)) {
          counters.skipped(stage);
        } else {
          Stopwatch sw;
          const DepthMap map = import_depth_png16(depth_path, item.real_scene_id);
          write_stl(depth_to_relief_mesh(map, config.depth.pitch_mm, config.depth.relief_height_mm,
                                         config.depth.base_thickness_mm),
                    mesh_path);
          ledger.record(stage, painting.id, key, {mesh_path});
          counters.executed(stage, sw.seconds());
          item.executed.push_back(stage);
        }
        item.mesh_path = mesh_path.generic_string();
      }
    } catch (const std::exception& e) {
      counters.failed({painting.id, stage, e.what()});
    }
  });

  // Register generated images.
  DatasetManifest outputs;
  outputs.name = "outputs-" + record.run_id;
  outputs.created_at = utc_timestamp();
  outputs.provenance_note = "pseudo-real and real-scene images of run " + record.run_id;
  for (const auto& item : record.items) {
    const fs::path dir = run_dir / "items" / item.painting_id;
    if (!item.pseudo_real_id.empty() && fs::exists(dir / "pseudo_real.png")) {
      ImageRecord r = make_record(dir / "pseudo_real.png", DomainTag::PseudoReal, item.pseudo_real_id);
      r.id = item.pseudo_real_id;
      outputs.records.push_back(std::move(r));
    }
    if (!item.real_scene_id.empty() && fs::exists(dir / "real_scene.png")) {
      ImageRecord r = make_record(dir / "real_scene.png", DomainTag::RealScene, item.real_scene_id);
      r.id = item.real_scene_id;
      outputs.records.push_back(std::move(r));
    }
  }
  save_manifest(outputs, run_dir / "outputs.manifest");
  if (!record.failures.empty())
    std::cerr << "warning: " << record.failures.size() << " stage failure(s); see run_record.json\n";
  return finish();
}

// ---------------------------------------------------------------------------
// K sweep

SweepResult k_sweep(const PipelineConfig& config, std::vector<int> k_values) {
  if (k_values.empty()) throw Error(ErrorCode::InvalidConfig, "k_values is empty");
  SweepResult result;
  std::vector<int> unique;
  std::set<int> seen;
  for (int k : k_values) {
    if (k < 1) throw Error(ErrorCode::InvalidK, "K must be >= 1, got " + std::to_string(k));
    if (!seen.insert(k).second) {
      result.warnings.push_back("duplicate K=" + std::to_string(k) + " ignored");
      std::cerr << "warning: " << result.warnings.back() << '\n';
      continue;
    }
    unique.push_back(k);
  }

  const fs::path root = config.output_root;
  for (int k : unique) {
    PipelineConfig run = config;
    run.k = k;
    run.output_root = root / ("k" + std::to_string(k));
    if (!run.cache_root && !std::getenv("P2D_CACHE")) run.cache_root = root / "cache";
    result.runs.push_back(run_full(run));
  }

  std::ostringstream sheet;
  sheet << "k,run_id,pairs,score_min,score_mean,score_median,score_max,items,failures,qs_avg,qq_avg\n";
  for (const auto& r : result.runs) {
    std::vector<double> s = r.match_scores;
    std::sort(s.begin(), s.end());
    double mean = 0;
    for (double v : s) mean += v;
    if (!s.empty()) mean /= static_cast<double>(s.size());
    const double median = s.empty() ? 0 : (s.size() % 2 ? s[s.size() / 2] : 0.5 * (s[s.size() / 2 - 1] + s[s.size() / 2]));
    std::string qs, qq;
    // A study for this run, if one was served from run_dir/study or a subdirectory of it.
    fs::path aggregate;
    std::error_code ec;
    if (fs::is_directory(r.run_dir / "study", ec))
      for (const auto& entry : fs::recursive_directory_iterator(r.run_dir / "study", ec))
        if (entry.path().filename() == "aggregate.json" && (aggregate.empty() || entry.path() < aggregate))
          aggregate = entry.path();
    if (!aggregate.empty()) {
      try {
        const json a = json::parse(read_all(aggregate, ErrorCode::NotFound));
        qs = json(a.at("qs_avg").get<double>()).dump();
        qq = json(a.at("qq_avg").get<double>()).dump();
      } catch (const std::exception&) {
      }
    }
    sheet << r.k << ',' << r.run_id << ',' << s.size() << ',' << (s.empty() ? 0 : s.front()) << ',' << mean << ','
          << median << ',' << (s.empty() ? 0 : s.back()) << ',' << r.items.size() << ',' << r.failures.size() << ','
          << qs << ',' << qq << '\n';
  }
  result.comparison_sheet = root / "sweep.csv";
  write_all(result.comparison_sheet, sheet.str());
  return result;
}

}  // namespace p2d
