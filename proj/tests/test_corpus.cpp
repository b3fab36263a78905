#include "p2d/corpus.hpp"
#include "p2d/error.hpp"
#include "p2d/hash.hpp"

#include "support.hpp"

#include <doctest.h>

#include <fstream>

using namespace p2d;
using p2d::testing::TempDir;

namespace {

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << text;
}

void populate(const std::filesystem::path& root, int n) {
  Rng rng(3);
  for (int i = 0; i < n; ++i) write_png(root / "sub" / ("img" + std::to_string(i) + ".png"), testing::smooth_image(rng, 12, 10));
}

}  // namespace

TEST_SUITE("corpus") {
  TEST_CASE("ingest counts decodable, corrupt and foreign files") {
    TempDir dir("ingest");
    populate(dir.path(), 3);
    write_text(dir / "broken.png", "\x89PNG\r\n\x1a\nnot really");
    write_text(dir / "notes.txt", "hello");

    const IngestResult r = ingest_directory(dir.path(), DomainTag::Painting);
    CHECK(r.manifest.records.size() == 3);
    CHECK(r.skipped == std::vector<std::string>{"broken.png"});
    CHECK(r.ignored == 1);
    for (const auto& rec : r.manifest.records) {
      CHECK(rec.domain_tag == DomainTag::Painting);
      CHECK(rec.width == 10);
      CHECK(rec.height == 12);
      CHECK(rec.checksum == sha256_file(rec.path));
      CHECK(rec.id.size() == 16);
    }
    CHECK_NOTHROW(r.manifest.validate());
  }

  TEST_CASE("ids are stable across re-ingestion") {
    TempDir dir("stable");
    populate(dir.path(), 4);
    const auto a = ingest_directory(dir.path(), DomainTag::Photo).manifest;
    const auto b = ingest_directory(dir.path(), DomainTag::Photo).manifest;
    CHECK(a.records == b.records);
    CHECK(manifest_hash(a) == manifest_hash(b));
  }

  TEST_CASE("empty directory is an error") {
    TempDir dir("empty");
    write_text(dir / "readme.md", "x");
    CHECK_THROWS_AS(ingest_directory(dir.path(), DomainTag::Photo), Error);
    try {
      ingest_directory(dir.path(), DomainTag::Photo);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::EmptyCorpus);
    }
  }

  TEST_CASE("seeded sampling is deterministic and bounded") {
    TempDir dir("sample");
    populate(dir.path(), 8);
    IngestOptions opt;
    opt.sample = 3;
    opt.sample_seed = 11;
    const auto a = ingest_directory(dir.path(), DomainTag::Photo, opt).manifest;
    const auto b = ingest_directory(dir.path(), DomainTag::Photo, opt).manifest;
    CHECK(a.records.size() == 3);
    CHECK(a.records == b.records);
    opt.sample_seed = 12;
    const auto c = ingest_directory(dir.path(), DomainTag::Photo, opt).manifest;
    CHECK(c.records.size() == 3);
  }

  TEST_CASE("manifest round trip and damage detection") {
    TempDir dir("manifest");
    populate(dir / "imgs", 3);
    DatasetManifest m = ingest_directory(dir / "imgs", DomainTag::Painting).manifest;
    m.pairs.push_back({m.records[0].id, m.records[1].id, 1, 0.9});
    m.pairs.push_back({m.records[0].id, m.records[2].id, 2, 0.8});
    save_manifest(m, dir / "m.manifest");
    CHECK(load_manifest(dir / "m.manifest") == m);

    std::ifstream in(dir / "m.manifest");
    std::string text((std::istreambuf_iterator<char>(in)), {});
    write_text(dir / "cut.manifest", text.substr(0, text.size() / 2));
    try {
      load_manifest(dir / "cut.manifest");
      FAIL("truncated manifest loaded");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::IncompatibleManifest);
    }
    try {
      load_manifest(dir / "missing.manifest");
      FAIL("missing manifest loaded");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::NotFound);
    }
  }

  TEST_CASE("validate rejects inconsistent manifests") {
    DatasetManifest m;
    m.records.push_back({"a", DomainTag::Painting, "a.png", 1, 1, "x"});
    m.records.push_back({"b", DomainTag::Photo, "b.png", 1, 1, "y"});
    CHECK_NOTHROW(m.validate());

    DatasetManifest dup = m;
    dup.records.push_back(m.records[0]);
    CHECK_THROWS_AS(dup.validate(), Error);

    DatasetManifest dangling = m;
    dangling.pairs.push_back({"a", "zzz", 1, 0.5});
    CHECK_THROWS_AS(dangling.validate(), Error);

    DatasetManifest gap = m;
    gap.pairs.push_back({"a", "b", 2, 0.5});
    CHECK_THROWS_AS(gap.validate(), Error);
  }

  TEST_CASE("domain tags parse") {
    for (auto t : {DomainTag::Painting, DomainTag::Photo, DomainTag::PseudoReal, DomainTag::RealScene})
      CHECK(parse_domain_tag(to_string(t)) == t);
    CHECK_THROWS_AS(parse_domain_tag("sketch"), Error);
  }
}
