#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace p2d {

enum class DomainTag { Painting, Photo, PseudoReal, RealScene };

std::string_view to_string(DomainTag tag) noexcept;
DomainTag parse_domain_tag(std::string_view text);

struct ImageRecord {
  std::string id;
  DomainTag domain_tag = DomainTag::Painting;
  std::string path;
  int width = 0;
  int height = 0;
  std::string checksum;  // sha256 of the file bytes

  bool operator==(const ImageRecord&) const = default;
};

/// One painting-to-photo match; rank 1 is the best match.
struct MatchPair {
  std::string painting_id;
  std::string photo_id;
  int rank = 0;
  double score = 0.0;

  bool operator==(const MatchPair&) const = default;
};

struct DatasetManifest {
  static constexpr int kSchemaVersion = 1;

  std::string name;
  std::vector<ImageRecord> records;
  std::vector<MatchPair> pairs;
  std::string created_at;
  std::string provenance_note;

  const ImageRecord* find(std::string_view id) const;
  std::vector<const ImageRecord*> with_tag(DomainTag tag) const;

  /// Checks id uniqueness, pair references and per-painting rank contiguity.
  /// Throws Error(IncompatibleManifest).
  void validate() const;

  bool operator==(const DatasetManifest&) const = default;
};

struct IngestOptions {
  std::string name;                    // defaults to the directory name
  std::optional<std::size_t> sample;   // keep at most this many images
  std::uint64_t sample_seed = 0;
  unsigned workers = 0;                // hashing threads, 0 = hardware concurrency
};

struct IngestResult {
  DatasetManifest manifest;
  std::vector<std::string> skipped;  // image files that failed to decode
  std::size_t ignored = 0;           // non-image files
};

/// Recursively ingests PNG files under root. Records are ordered by relative path and
/// ids are derived from (relative path, checksum), so re-ingestion is stable.
IngestResult ingest_directory(const std::filesystem::path& root, DomainTag tag, const IngestOptions& options = {});

/// Builds a record for a single file, with the id derived from `id_key` and the checksum.
ImageRecord make_record(const std::filesystem::path& file, DomainTag tag, std::string_view id_key);

std::string derive_record_id(std::string_view relative_path, std::string_view checksum);

std::string serialize_manifest(const DatasetManifest& manifest);
DatasetManifest parse_manifest(std::string_view text);

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest load_manifest(const std::filesystem::path& path);

/// Content hash of a manifest ignoring created_at.
std::string manifest_hash(const DatasetManifest& manifest);

std::string utc_timestamp();

}  // namespace p2d
