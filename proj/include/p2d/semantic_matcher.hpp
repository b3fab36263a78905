#pragma once

#include "p2d/corpus.hpp"
#include "p2d/image.hpp"

#include <Eigen/Core>

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace p2d {

struct DictionaryEntry {
  std::string category;  // e.g. water
  std::string keyword;   // e.g. waterfall
  std::string prompt;    // e.g. "a photo of a waterfall"

  bool operator==(const DictionaryEntry&) const = default;
};

/// Entry order defines the axis order of every SemanticProfile built against it.
struct Dictionary {
  std::vector<DictionaryEntry> entries;
  std::string version;

  std::size_t size() const { return entries.size(); }
  bool operator==(const Dictionary&) const = default;
};

using CategorySpec = std::map<std::string, std::vector<std::string>>;

struct PromptTemplates {
  std::string fallback = "a photo of a {keyword}";
  std::map<std::string, std::string> per_category;

  std::string render(const std::string& category, const std::string& keyword) const;
};

/// One entry per (category, keyword), ordered by category then keyword.
/// Throws DictionaryEmpty / DuplicateEntry.
Dictionary build_dictionary(const CategorySpec& spec, const PromptTemplates& templates = {},
                            std::string version = "1");

/// Nature-weighted keyword set for landscape paintings. This is a reconstruction:
/// categories follow the water/mountain split common in the genre, not a published list.
CategorySpec default_category_spec();

/// Tab-separated file, header `#p2d-dictionary<TAB>1<TAB>version`, then `category<TAB>keyword<TAB>prompt`.
void save_dictionary(const Dictionary& dict, const std::filesystem::path& path);
Dictionary load_dictionary(const std::filesystem::path& path);
std::string dictionary_hash(const Dictionary& dict);

// ---------------------------------------------------------------------------
// Encoders

class TextEncoder {
 public:
  virtual ~TextEncoder() = default;
  virtual std::string version() const = 0;
  /// Raw (not necessarily normalized) embedding. Throws EncoderUnavailable on backend failure.
  virtual Eigen::VectorXd encode(const std::string& text) = 0;
};

class ImageEncoder {
 public:
  virtual ~ImageEncoder() = default;
  virtual std::string version() const = 0;
  virtual Eigen::VectorXd encode(const ImageD& image, const std::filesystem::path& source) = 0;
};

/// Unit-norm copy; throws DimensionError for a zero or non-finite vector.
Eigen::VectorXd normalized(const Eigen::VectorXd& v);

/// Columns are the unit-norm prompt embeddings, aligned with dict.entries.
Eigen::MatrixXd encode_texts(const Dictionary& dict, TextEncoder& encoder);

/// Content-addressed embedding store keyed by (checksum, encoder version).
/// Concurrent readers, serialized writers. With no root it is memory-only.
class EmbeddingCache {
 public:
  explicit EmbeddingCache(std::optional<std::filesystem::path> root = std::nullopt);

  std::optional<Eigen::VectorXd> lookup(const std::string& checksum, const std::string& encoder_version) const;
  void store(const std::string& checksum, const std::string& encoder_version, const Eigen::VectorXd& embedding);
  std::filesystem::path file_for(const std::string& checksum, const std::string& encoder_version) const;

 private:
  std::optional<std::filesystem::path> root_;
  mutable std::shared_mutex mutex_;
  mutable std::unordered_map<std::string, Eigen::VectorXd> memory_;
};

struct EncodedImage {
  Eigen::VectorXd embedding;  // unit norm
  bool cache_hit = false;
};

/// Throws DecodeError for an unreadable image.
EncodedImage encode_image(const ImageRecord& record, ImageEncoder& encoder, EmbeddingCache& cache);

// ---------------------------------------------------------------------------
// Profiles and matching

inline constexpr double kDefaultTemperature = 0.07;

struct SemanticProfile {
  std::string image_id;
  Eigen::VectorXd weights;  // softmax over dictionary entries
};

/// weights = softmax(cos(image, text_k) / temperature). Throws DimensionError / InvalidArgument.
SemanticProfile semantic_profile(std::string image_id, const Eigen::VectorXd& image_embedding,
                                 const Eigen::MatrixXd& text_embeddings, double temperature = kDefaultTemperature);

struct ScoredPhoto {
  std::string photo_id;
  double score = 0.0;

  bool operator==(const ScoredPhoto&) const = default;
};

struct MatchResult {
  std::string painting_id;
  std::vector<ScoredPhoto> matches;  // descending score, ties by ascending photo_id
};

double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

/// Exhaustive top-K by profile cosine. Throws InvalidK / InsufficientCandidates / DimensionError.
MatchResult match_top_k(const SemanticProfile& painting, std::span<const SemanticProfile> photos, int k);

struct MatchingBackends {
  TextEncoder& text;
  ImageEncoder& image;
  EmbeddingCache& cache;
  double temperature = kDefaultTemperature;
  unsigned workers = 0;
};

/// Profiles every painting and photo, keeps the top-K photos per painting, and returns
/// a manifest holding both record sets plus K ranked pairs per painting.
DatasetManifest build_clip_matched_dataset(const DatasetManifest& paintings, const DatasetManifest& photos,
                                           const Dictionary& dict, int k, MatchingBackends& backends);

}  // namespace p2d
