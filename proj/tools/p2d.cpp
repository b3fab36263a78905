#include "p2d/corpus.hpp"
#include "p2d/depth.hpp"
#include "p2d/diffusion_refiner.hpp"
#include "p2d/encoders.hpp"
#include "p2d/error.hpp"
#include "p2d/pipeline.hpp"
#include "p2d/semantic_matcher.hpp"
#include "p2d/study.hpp"
#include "p2d/study_server.hpp"
#include "p2d/translation_gan.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace p2d;

namespace {

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::NotFound, "cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::optional<fs::path> cache_from_env() {
  if (const char* env = std::getenv("P2D_CACHE"); env && *env) return fs::path(env) / "embeddings";
  return std::nullopt;
}

StudyServer* active_server = nullptr;

void on_signal(int) {
  if (active_server) active_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Painting-to-relief toolkit"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  // ingest
  fs::path ingest_root, ingest_out;
  std::string ingest_domain, ingest_name;
  std::optional<std::size_t> ingest_sample;
  std::uint64_t ingest_seed = 0;
  auto* ingest = app.add_subcommand("ingest", "Scan a directory of PNG images into a manifest");
  ingest->add_option("--root", ingest_root, "Image directory")->required();
  ingest->add_option("--domain", ingest_domain, "painting or photo")->required()->check(CLI::IsMember({"painting", "photo"}));
  ingest->add_option("--out", ingest_out, "Manifest to write")->required();
  ingest->add_option("--name", ingest_name, "Dataset name");
  ingest->add_option("--sample", ingest_sample, "Keep at most N images");
  ingest->add_option("--seed", ingest_seed, "Sampling seed");

  // match
  fs::path match_paintings, match_photos, match_out;
  std::optional<fs::path> match_dict, match_cache;
  int match_k = 3;
  double match_temperature = kDefaultTemperature;
  std::string match_encoder = "stub";
  auto* match = app.add_subcommand("match", "Pair each painting with its K most similar photos");
  match->add_option("--paintings", match_paintings)->required();
  match->add_option("--photos", match_photos)->required();
  match->add_option("--dict", match_dict, "Dictionary file (built-in default if omitted)");
  match->add_option("--k", match_k)->capture_default_str();
  match->add_option("--out", match_out)->required();
  match->add_option("--temperature", match_temperature)->capture_default_str();
  match->add_option("--encoder", match_encoder, "stub or command:PROGRAM")->capture_default_str();
  match->add_option("--cache", match_cache, "Embedding cache directory");

  // train
  fs::path train_pairs, train_config, train_out;
  auto* train_cmd = app.add_subcommand("train", "Train the translator pair on a matched manifest");
  train_cmd->add_option("--pairs", train_pairs)->required();
  train_cmd->add_option("--config", train_config, "Training config JSON")->required();
  train_cmd->add_option("--out", train_out, "Run directory")->required();

  // translate
  fs::path translate_ckpt, translate_in, translate_out;
  std::optional<long> translate_step;
  auto* translate = app.add_subcommand("translate", "Translate a painting into a pseudo-real image");
  translate->add_option("--ckpt", translate_ckpt, "Training run directory")->required();
  translate->add_option("--in", translate_in)->required();
  translate->add_option("--out", translate_out)->required();
  translate->add_option("--step", translate_step, "Checkpoint step (latest if omitted)");

  // refine
  fs::path refine_content, refine_reference, refine_out;
  std::string refine_backend = "stub", refine_program;
  RefineParams refine_params;
  auto* refine_cmd = app.add_subcommand("refine", "Refine a pseudo-real image under the painting's structure");
  refine_cmd->add_option("--content", refine_content)->required();
  refine_cmd->add_option("--reference", refine_reference)->required();
  refine_cmd->add_option("--backend", refine_backend, "stub, external or external:PROGRAM")->capture_default_str();
  refine_cmd->add_option("--program", refine_program, "Program for the external backend");
  refine_cmd->add_option("--out", refine_out)->required();
  refine_cmd->add_option("--steps", refine_params.steps)->capture_default_str();
  refine_cmd->add_option("--strength", refine_params.strength)->capture_default_str();
  refine_cmd->add_option("--seed", refine_params.seed)->capture_default_str();

  // depth
  fs::path depth_in, depth_out;
  std::optional<fs::path> depth_mesh;
  std::string depth_backend = "stub";
  double pitch = 0.2, height = 8.0, base = 2.0;
  auto* depth_cmd = app.add_subcommand("depth", "Estimate depth and optionally export a relief mesh");
  depth_cmd->add_option("--in", depth_in)->required();
  depth_cmd->add_option("--backend", depth_backend, "stub, luminance or external:PROGRAM")->capture_default_str();
  depth_cmd->add_option("--out", depth_out, "16-bit depth PNG")->required();
  depth_cmd->add_option("--mesh", depth_mesh, "STL (or .obj) mesh to write");
  depth_cmd->add_option("--pitch", pitch, "Millimetres per pixel")->capture_default_str();
  depth_cmd->add_option("--height", height, "Relief height in millimetres")->capture_default_str();
  depth_cmd->add_option("--base", base, "Base thickness in millimetres")->capture_default_str();

  // run / sweep
  fs::path run_config;
  auto* run_cmd = app.add_subcommand("run", "Run the full pipeline from a config file");
  run_cmd->add_option("--config", run_config)->required();

  fs::path sweep_config;
  std::vector<int> sweep_k{1, 3, 5, 10};
  auto* sweep = app.add_subcommand("sweep", "Run the pipeline once per K");
  sweep->add_option("--config", sweep_config)->required();
  sweep->add_option("--k", sweep_k, "K values")->delimiter(',')->capture_default_str();

  // serve-study
  fs::path study_dir;
  std::optional<fs::path> study_static, study_create;
  int study_port = 8080, study_n = 5;
  std::uint64_t study_seed = 0;
  std::string study_host = "127.0.0.1";
  auto* serve = app.add_subcommand("serve-study", "Serve the user study over HTTP");
  serve->add_option("--study", study_dir, "Study directory")->required();
  serve->add_option("--port", study_port)->capture_default_str();
  serve->add_option("--host", study_host)->capture_default_str();
  serve->add_option("--static", study_static, "Directory of static client files");
  serve->add_option("--create-from", study_create, "Create a study from this run_record.json first");
  serve->add_option("--n", study_n, "Question sets for --create-from")->capture_default_str();
  serve->add_option("--seed", study_seed, "Sampling seed for --create-from")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest) {
      IngestOptions options;
      options.name = ingest_name;
      options.sample = ingest_sample;
      options.sample_seed = ingest_seed;
      const IngestResult r = ingest_directory(ingest_root, parse_domain_tag(ingest_domain), options);
      save_manifest(r.manifest, ingest_out);
      std::cout << r.manifest.records.size() << " records, " << r.skipped.size() << " skipped, " << r.ignored
                << " ignored -> " << ingest_out.string() << '\n';
    } else if (*match) {
      std::unique_ptr<TextEncoder> text;
      std::unique_ptr<ImageEncoder> image;
      if (match_encoder.rfind("command:", 0) == 0) {
        const std::string program = match_encoder.substr(8);
        text = std::make_unique<CommandTextEncoder>(program, program);
        image = std::make_unique<CommandImageEncoder>(program, program);
      } else {
        text = std::make_unique<HashingTextEncoder>();
        image = std::make_unique<ProjectionImageEncoder>();
      }
      const Dictionary dict =
          match_dict ? load_dictionary(*match_dict) : build_dictionary(default_category_spec(), {}, "default-1");
      EmbeddingCache cache(match_cache ? match_cache : cache_from_env());
      MatchingBackends backends{*text, *image, cache, match_temperature, 0};
      const DatasetManifest matched =
          build_clip_matched_dataset(load_manifest(match_paintings), load_manifest(match_photos), dict, match_k, backends);
      save_manifest(matched, match_out);
      std::cout << matched.pairs.size() << " pairs -> " << match_out.string() << '\n';
    } else if (*train_cmd) {
      std::string text = slurp(train_config);
      if (const auto j = nlohmann::json::parse(text); j.contains("train")) text = j["train"].dump();
      const TrainConfig config = TrainConfig::from_json(text);
      TranslatorPair pair = TranslatorPair::create(config);
      const TrainResult r = train(pair, load_manifest(train_pairs), config, train_out);
      const LossReport& last = r.losses.back();
      std::cout << "step " << last.step << " adv_ori " << last.adv_ori << " adv_photo " << last.adv_photo << " cyc "
                << last.cyc << " total " << last.total << "\ncheckpoint " << r.last_checkpoint.string() << '\n';
    } else if (*translate) {
      const LoadedCheckpoint ckpt = load_checkpoint(translate_ckpt, translate_step);
      write_png(translate_out, translate_image(ckpt.pair, read_png(translate_in), ckpt.config.image_size));
    } else if (*refine_cmd) {
      std::string name = refine_backend;
      if (name == "external") name = "external:" + refine_program;
      auto backend = make_refine_backend(name);
      RefineInputs inputs{to_rgb(read_png(refine_content)), to_rgb(read_png(refine_reference)), refine_content,
                          refine_reference};
      if (inputs.content.height() != inputs.reference.height() || inputs.content.width() != inputs.reference.width()) {
        inputs.content = resize_bilinear(inputs.content, inputs.reference.height(), inputs.reference.width());
        inputs.content_path.clear();
      }
      write_png(refine_out, refine_image(inputs, refine_params, *backend));
    } else if (*depth_cmd) {
      auto backend = make_depth_backend(depth_backend);
      const DepthMap map =
          normalize_depth(estimate_depth(read_png(depth_in), depth_in.stem().string(), *backend, depth_in));
      export_depth_png16(map, depth_out);
      if (depth_mesh) {
        const ReliefMesh mesh = depth_to_relief_mesh(map, pitch, height, base);
        if (depth_mesh->extension() == ".obj")
          write_obj(mesh, *depth_mesh);
        else
          write_stl(mesh, *depth_mesh);
        std::cout << mesh.triangles.rows() << " triangles -> " << depth_mesh->string() << '\n';
      }
    } else if (*run_cmd) {
      const RunRecord r = run_full(PipelineConfig::load(run_config));
      std::cout << "run " << r.run_id << ": " << r.items.size() << " items, " << r.failures.size() << " failures\n";
      for (const auto& [stage, n] : r.stage_executions) std::cout << "  " << stage << " executed " << n << '\n';
      for (const auto& [stage, n] : r.stage_skips) std::cout << "  " << stage << " skipped " << n << '\n';
      return r.complete() ? 0 : 2;
    } else if (*sweep) {
      const SweepResult r = k_sweep(PipelineConfig::load(sweep_config), sweep_k);
      std::cout << r.runs.size() << " runs; comparison sheet " << r.comparison_sheet.string() << '\n';
    } else if (*serve) {
      if (study_create) {
        const StudyDefinition study = create_study(RunRecord::load(*study_create), study_n, study_seed);
        StudyStore::initialize(study_dir, study);
        std::cout << "created study " << study.study_id << '\n';
      }
      StudyServer server(study_dir, study_static);
      const int port = server.bind(study_host, study_port);
      active_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cout << "serving " << study_dir.string() << " on http://" << study_host << ':' << port << '\n' << std::flush;
      server.run();
      active_server = nullptr;
    }
  } catch (const Error& e) {
    std::cerr << "p2d: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "p2d: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
