#include "p2d/corpus.hpp"

#include "p2d/error.hpp"
#include "p2d/hash.hpp"
#include "p2d/image.hpp"
#include "p2d/parallel.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

namespace p2d {
namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(DomainTag tag) noexcept {
  switch (tag) {
    case DomainTag::Painting: return "painting";
    case DomainTag::Photo: return "photo";
    case DomainTag::PseudoReal: return "pseudo_real";
    case DomainTag::RealScene: return "real_scene";
  }
  return "painting";
}

DomainTag parse_domain_tag(std::string_view text) {
  if (text == "painting") return DomainTag::Painting;
  if (text == "photo") return DomainTag::Photo;
  if (text == "pseudo_real") return DomainTag::PseudoReal;
  if (text == "real_scene") return DomainTag::RealScene;
  throw Error(ErrorCode::InvalidArgument, "unknown domain tag '" + std::string(text) + "'");
}

const ImageRecord* DatasetManifest::find(std::string_view id) const {
  for (const auto& r : records)
    if (r.id == id) return &r;
  return nullptr;
}

std::vector<const ImageRecord*> DatasetManifest::with_tag(DomainTag tag) const {
  std::vector<const ImageRecord*> out;
  for (const auto& r : records)
    if (r.domain_tag == tag) out.push_back(&r);
  return out;
}

void DatasetManifest::validate() const {
  std::set<std::string_view> ids;
  for (const auto& r : records) {
    if (!ids.insert(r.id).second) throw Error(ErrorCode::IncompatibleManifest, "duplicate record id " + r.id);
    if (r.width < 1 || r.height < 1) throw Error(ErrorCode::IncompatibleManifest, "bad dimensions for " + r.id);
  }
  std::map<std::string_view, std::vector<const MatchPair*>> by_painting;
  for (const auto& p : pairs) {
    if (!ids.count(p.painting_id) || !ids.count(p.photo_id))
      throw Error(ErrorCode::IncompatibleManifest, "pair references unknown id");
    by_painting[p.painting_id].push_back(&p);
  }
  for (auto& [painting, list] : by_painting) {
    std::sort(list.begin(), list.end(), [](auto* a, auto* b) { return a->rank < b->rank; });
    for (std::size_t i = 0; i < list.size(); ++i) {
      if (list[i]->rank != static_cast<int>(i) + 1)
        throw Error(ErrorCode::IncompatibleManifest, "ranks not contiguous for " + std::string(painting));
      if (i > 0 && list[i]->score > list[i - 1]->score)
        throw Error(ErrorCode::IncompatibleManifest, "scores not descending for " + std::string(painting));
    }
  }
}

std::string derive_record_id(std::string_view relative_path, std::string_view checksum) {
  std::string key(relative_path);
  key.push_back('\n');
  key.append(checksum);
  return sha256_hex(key).substr(0, 16);
}

ImageRecord make_record(const fs::path& file, DomainTag tag, std::string_view id_key) {
  const auto bytes = read_file_bytes(file);
  const ImageD img = decode_png(bytes);
  ImageRecord r;
  r.checksum = sha256_hex(bytes);
  r.id = derive_record_id(id_key, r.checksum);
  r.domain_tag = tag;
  r.path = file.lexically_normal().generic_string();
  r.width = img.width();
  r.height = img.height();
  return r;
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

namespace {

bool has_image_extension(const fs::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png";
}

}  // namespace

IngestResult ingest_directory(const fs::path& root, DomainTag tag, const IngestOptions& options) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw Error(ErrorCode::NotFound, root.string());

  std::vector<fs::path> candidates;
  IngestResult result;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    if (has_image_extension(entry.path())) {
      candidates.push_back(entry.path());
    } else {
      ++result.ignored;
    }
  }
  std::sort(candidates.begin(), candidates.end());

  std::vector<std::optional<ImageRecord>> slots(candidates.size());
  parallel_for(candidates.size(), options.workers, [&](std::size_t i) {
    const std::string rel = candidates[i].lexically_relative(root).generic_string();
    try {
      slots[i] = make_record(candidates[i], tag, rel);
    } catch (const Error&) {
      slots[i].reset();
    }
  });

  auto& manifest = result.manifest;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (slots[i]) {
      manifest.records.push_back(std::move(*slots[i]));
    } else {
      result.skipped.push_back(candidates[i].lexically_relative(root).generic_string());
    }
  }
  if (result.ignored > 0) std::cerr << "warning: ignored " << result.ignored << " non-image file(s)\n";
  if (!result.skipped.empty()) std::cerr << "warning: skipped " << result.skipped.size() << " undecodable image(s)\n";
  if (manifest.records.empty()) throw Error(ErrorCode::EmptyCorpus, root.string());

  if (options.sample && *options.sample < manifest.records.size()) {
    // Seeded selection keyed by content-derived ids, independent of the platform RNG.
    const std::string seed = std::to_string(options.sample_seed);
    std::vector<std::pair<std::string, std::size_t>> keyed;
    for (std::size_t i = 0; i < manifest.records.size(); ++i)
      keyed.emplace_back(sha256_hex(seed + ":" + manifest.records[i].id), i);
    std::sort(keyed.begin(), keyed.end());
    keyed.resize(*options.sample);
    std::vector<std::size_t> keep;
    for (const auto& k : keyed) keep.push_back(k.second);
    std::sort(keep.begin(), keep.end());
    std::vector<ImageRecord> kept;
    for (auto i : keep) kept.push_back(std::move(manifest.records[i]));
    manifest.records = std::move(kept);
  }

  manifest.name = options.name.empty() ? fs::absolute(root).lexically_normal().filename().string() : options.name;
  if (manifest.name.empty()) manifest.name = fs::absolute(root).lexically_normal().parent_path().filename().string();
  manifest.created_at = utc_timestamp();
  std::ostringstream note;
  note << "ingested " << manifest.records.size() << " " << to_string(tag) << " image(s); skipped "
       << result.skipped.size();
  if (options.sample) note << "; sample=" << *options.sample << " seed=" << options.sample_seed;
  manifest.provenance_note = note.str();
  return result;
}

std::string serialize_manifest(const DatasetManifest& m) {
  std::string out;
  json header = {{"schema_version", DatasetManifest::kSchemaVersion},
                 {"kind", "header"},
                 {"name", m.name},
                 {"created_at", m.created_at},
                 {"provenance_note", m.provenance_note},
                 {"record_count", m.records.size()},
                 {"pair_count", m.pairs.size()}};
  out += header.dump() + "\n";
  for (const auto& r : m.records) {
    json line = {{"kind", "record"}, {"id", r.id},         {"domain_tag", to_string(r.domain_tag)},
                 {"path", r.path},   {"width", r.width},   {"height", r.height},
                 {"checksum", r.checksum}};
    out += line.dump() + "\n";
  }
  for (const auto& p : m.pairs) {
    json line = {{"kind", "pair"}, {"painting_id", p.painting_id}, {"photo_id", p.photo_id},
                 {"rank", p.rank}, {"score", p.score}};
    out += line.dump() + "\n";
  }
  return out;
}

DatasetManifest parse_manifest(std::string_view text) {
  DatasetManifest m;
  std::size_t expected_records = 0, expected_pairs = 0;
  bool have_header = false;
  std::size_t pos = 0;
  try {
    while (pos < text.size()) {
      const std::size_t end = text.find('\n', pos);
      const std::string_view line = text.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos);
      pos = end == std::string_view::npos ? text.size() : end + 1;
      if (line.empty()) continue;
      const json j = json::parse(line);
      if (!have_header) {
        if (j.value("kind", "") != "header" || !j.contains("schema_version"))
          throw Error(ErrorCode::IncompatibleManifest, "missing header line");
        if (j.at("schema_version").get<int>() != DatasetManifest::kSchemaVersion)
          throw Error(ErrorCode::IncompatibleManifest,
                      "schema_version " + j.at("schema_version").dump() + " is not supported");
        m.name = j.at("name").get<std::string>();
        m.created_at = j.at("created_at").get<std::string>();
        m.provenance_note = j.at("provenance_note").get<std::string>();
        expected_records = j.at("record_count").get<std::size_t>();
        expected_pairs = j.at("pair_count").get<std::size_t>();
        have_header = true;
        continue;
      }
      const auto kind = j.at("kind").get<std::string>();
      if (kind == "record") {
        ImageRecord r;
        r.id = j.at("id").get<std::string>();
        r.domain_tag = parse_domain_tag(j.at("domain_tag").get<std::string>());
        r.path = j.at("path").get<std::string>();
        r.width = j.at("width").get<int>();
        r.height = j.at("height").get<int>();
        r.checksum = j.at("checksum").get<std::string>();
        m.records.push_back(std::move(r));
      } else if (kind == "pair") {
        MatchPair p;
        p.painting_id = j.at("painting_id").get<std::string>();
        p.photo_id = j.at("photo_id").get<std::string>();
        p.rank = j.at("rank").get<int>();
        p.score = j.at("score").get<double>();
        m.pairs.push_back(std::move(p));
      } else {
        throw Error(ErrorCode::IncompatibleManifest, "unknown line kind '" + kind + "'");
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::IncompatibleManifest, e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::IncompatibleManifest) throw;
    throw Error(ErrorCode::IncompatibleManifest, e.what());
  }
  if (!have_header) throw Error(ErrorCode::IncompatibleManifest, "empty manifest file");
  if (m.records.size() != expected_records || m.pairs.size() != expected_pairs)
    throw Error(ErrorCode::IncompatibleManifest, "truncated manifest");
  m.validate();
  return m;
}

void save_manifest(const DatasetManifest& manifest, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    out << serialize_manifest(manifest);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  }
  fs::rename(tmp, path);
}

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::NotFound, path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_manifest(buf.str());
}

std::string manifest_hash(const DatasetManifest& manifest) {
  DatasetManifest copy = manifest;
  copy.created_at.clear();
  return sha256_hex(serialize_manifest(copy));
}

}  // namespace p2d
