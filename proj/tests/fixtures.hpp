#pragma once

#include "p2d/corpus.hpp"
#include "p2d/pipeline.hpp"

#include "support.hpp"

namespace p2d::testing {

/// Writes small painting and photo corpora plus their manifests under root and returns
/// a pipeline config sized for tests (tiny images, a few training steps).
inline PipelineConfig pipeline_fixture(const std::filesystem::path& root, int paintings = 4, int photos = 6) {
  Rng rng(77);
  for (int i = 0; i < paintings; ++i)
    write_png(root / "paintings" / ("p" + std::to_string(i) + ".png"), toy_shape(rng, 24));
  for (int i = 0; i < photos; ++i)
    write_png(root / "photos" / ("f" + std::to_string(i) + ".png"), inverted(toy_shape(rng, 28)));
  save_manifest(ingest_directory(root / "paintings", DomainTag::Painting).manifest, root / "paintings.manifest");
  save_manifest(ingest_directory(root / "photos", DomainTag::Photo).manifest, root / "photos.manifest");

  PipelineConfig c;
  c.paintings_manifest = root / "paintings.manifest";
  c.photos_manifest = root / "photos.manifest";
  c.k = 2;
  c.train.image_size = 16;
  c.train.iterations = 3;
  c.train.checkpoint_every = 10;
  c.train.generator = {4, 0};
  c.train.discriminator = {4, 1};
  c.refine.steps = 3;
  c.depth.pitch_mm = 0.5;
  c.output_root = root / "run";
  c.workers = 2;
  c.cache_root = root / "cache";
  return c;
}

}  // namespace p2d::testing

#include "p2d/study.hpp"

namespace p2d::testing {

/// A run record with n finished items whose painting and real-scene images exist on disk.
inline RunRecord study_run(const std::filesystem::path& root, int n) {
  Rng rng(5);
  RunRecord run;
  run.run_id = "run-fixture";
  for (int i = 0; i < n; ++i) {
    ItemRecord item;
    item.painting_id = "painting" + std::to_string(i);
    item.painting_path = (root / (item.painting_id + ".png")).string();
    item.real_scene_id = item.painting_id + ".real_scene";
    item.real_scene_path = (root / (item.real_scene_id + ".png")).string();
    write_png(item.painting_path, toy_shape(rng, 8));
    write_png(item.real_scene_path, toy_shape(rng, 8));
    run.items.push_back(item);
  }
  return run;
}

}  // namespace p2d::testing
