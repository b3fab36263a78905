#include "p2d/semantic_matcher.hpp"

#include "p2d/error.hpp"
#include "p2d/hash.hpp"
#include "p2d/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>

namespace p2d {
namespace fs = std::filesystem;

std::string PromptTemplates::render(const std::string& category, const std::string& keyword) const {
  const auto it = per_category.find(category);
  std::string text = it != per_category.end() ? it->second : fallback;
  static constexpr std::string_view kSlot = "{keyword}";
  for (auto pos = text.find(kSlot); pos != std::string::npos; pos = text.find(kSlot, pos + keyword.size()))
    text.replace(pos, kSlot.size(), keyword);
  return text;
}

Dictionary build_dictionary(const CategorySpec& spec, const PromptTemplates& templates, std::string version) {
  Dictionary dict;
  dict.version = std::move(version);
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& [category, keywords] : spec) {
    for (const auto& keyword : keywords) {
      if (!seen.emplace(category, keyword).second)
        throw Error(ErrorCode::DuplicateEntry, category + "/" + keyword);
      DictionaryEntry e{category, keyword, templates.render(category, keyword)};
      if (e.prompt.empty()) throw Error(ErrorCode::InvalidArgument, "empty prompt for " + category + "/" + keyword);
      dict.entries.push_back(std::move(e));
    }
  }
  if (dict.entries.empty()) throw Error(ErrorCode::DictionaryEmpty, "no dictionary entries");
  std::sort(dict.entries.begin(), dict.entries.end(), [](const auto& a, const auto& b) {
    return std::tie(a.category, a.keyword) < std::tie(b.category, b.keyword);
  });
  return dict;
}

CategorySpec default_category_spec() {
  return {
      {"mountain", {"cliff", "hill", "mountain", "peak", "ridge", "rock"}},
      {"water", {"lake", "pond", "river", "sea", "stream", "waterfall"}},
      {"sky", {"cloud", "fog", "mist", "moon"}},
      {"vegetation", {"bamboo", "forest", "pine tree", "tree", "willow"}},
      {"dwelling", {"boat", "bridge", "hut", "pavilion", "temple", "village"}},
  };
}

void save_dictionary(const Dictionary& dict, const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << "#p2d-dictionary\t1\t" << dict.version << "\n";
  for (const auto& e : dict.entries) out << e.category << '\t' << e.keyword << '\t' << e.prompt << '\n';
}

Dictionary load_dictionary(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::NotFound, path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("#p2d-dictionary\t1\t", 0) != 0)
    throw Error(ErrorCode::IncompatibleManifest, path.string() + ": missing or unsupported dictionary header");
  Dictionary dict;
  dict.version = line.substr(std::string_view("#p2d-dictionary\t1\t").size());
  std::set<std::pair<std::string, std::string>> seen;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    DictionaryEntry e;
    if (!std::getline(fields, e.category, '\t') || !std::getline(fields, e.keyword, '\t') ||
        !std::getline(fields, e.prompt) || e.prompt.empty())
      throw Error(ErrorCode::IncompatibleManifest, path.string() + ": malformed line '" + line + "'");
    if (!seen.emplace(e.category, e.keyword).second)
      throw Error(ErrorCode::DuplicateEntry, e.category + "/" + e.keyword);
    dict.entries.push_back(std::move(e));
  }
  if (dict.entries.empty()) throw Error(ErrorCode::DictionaryEmpty, path.string());
  return dict;
}

std::string dictionary_hash(const Dictionary& dict) {
  std::string text = dict.version + "\n";
  for (const auto& e : dict.entries) text += e.category + '\t' + e.keyword + '\t' + e.prompt + '\n';
  return sha256_hex(text);
}

Eigen::VectorXd normalized(const Eigen::VectorXd& v) {
  const double n = v.norm();
  if (v.size() == 0 || !std::isfinite(n) || n == 0.0)
    throw Error(ErrorCode::DimensionError, "cannot normalize a zero, empty or non-finite vector");
  return v / n;
}

Eigen::MatrixXd encode_texts(const Dictionary& dict, TextEncoder& encoder) {
  Eigen::MatrixXd out;
  for (std::size_t i = 0; i < dict.entries.size(); ++i) {
    const Eigen::VectorXd v = normalized(encoder.encode(dict.entries[i].prompt));
    if (i == 0) out.resize(v.size(), static_cast<Eigen::Index>(dict.entries.size()));
    if (v.size() != out.rows()) throw Error(ErrorCode::DimensionError, "text encoder changed dimension");
    out.col(static_cast<Eigen::Index>(i)) = v;
  }
  return out;
}

// ---------------------------------------------------------------------------

EmbeddingCache::EmbeddingCache(std::optional<fs::path> root) : root_(std::move(root)) {}

fs::path EmbeddingCache::file_for(const std::string& checksum, const std::string& encoder_version) const {
  const fs::path base = root_ ? *root_ : fs::path{};
  return base / sha256_hex(encoder_version).substr(0, 16) / (checksum + ".emb");
}

std::optional<Eigen::VectorXd> EmbeddingCache::lookup(const std::string& checksum,
                                                      const std::string& encoder_version) const {
  const std::string key = checksum + "|" + encoder_version;
  {
    std::shared_lock lock(mutex_);
    if (auto it = memory_.find(key); it != memory_.end()) return it->second;
  }
  if (!root_) return std::nullopt;
  std::ifstream in(file_for(checksum, encoder_version), std::ios::binary);
  if (!in) return std::nullopt;
  std::uint32_t dim = 0;
  in.read(reinterpret_cast<char*>(&dim), sizeof dim);
  if (!in || dim == 0 || dim > (1u << 20)) return std::nullopt;
  Eigen::VectorXd v(dim);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(dim * sizeof(double)));
  if (!in) return std::nullopt;
  std::unique_lock lock(mutex_);
  memory_.emplace(key, v);
  return v;
}

void EmbeddingCache::store(const std::string& checksum, const std::string& encoder_version,
                           const Eigen::VectorXd& embedding) {
  std::unique_lock lock(mutex_);
  memory_[checksum + "|" + encoder_version] = embedding;
  if (!root_) return;
  const fs::path file = file_for(checksum, encoder_version);
  fs::create_directories(file.parent_path());
  const fs::path tmp = file.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    const auto dim = static_cast<std::uint32_t>(embedding.size());
    out.write(reinterpret_cast<const char*>(&dim), sizeof dim);
    out.write(reinterpret_cast<const char*>(embedding.data()),
              static_cast<std::streamsize>(embedding.size() * sizeof(double)));
  }
  fs::rename(tmp, file);
}

EncodedImage encode_image(const ImageRecord& record, ImageEncoder& encoder, EmbeddingCache& cache) {
  const std::string version = encoder.version();
  if (auto hit = cache.lookup(record.checksum, version)) return {std::move(*hit), true};
  const ImageD pixels = read_png(record.path);
  EncodedImage out{normalized(encoder.encode(pixels, record.path)), false};
  cache.store(record.checksum, version, out.embedding);
  return out;
}

// ---------------------------------------------------------------------------

SemanticProfile semantic_profile(std::string image_id, const Eigen::VectorXd& image_embedding,
                                 const Eigen::MatrixXd& text_embeddings, double temperature) {
  if (!(temperature > 0.0)) throw Error(ErrorCode::InvalidArgument, "temperature must be positive");
  if (text_embeddings.cols() == 0) throw Error(ErrorCode::DictionaryEmpty, "no text embeddings");
  if (image_embedding.size() != text_embeddings.rows())
    throw Error(ErrorCode::DimensionError, "image embedding has dimension " + std::to_string(image_embedding.size()) +
                                               ", text embeddings " + std::to_string(text_embeddings.rows()));
  const Eigen::VectorXd image = normalized(image_embedding);
  const Eigen::RowVectorXd text_norms = text_embeddings.colwise().norm();
  const Eigen::VectorXd cosines = (text_embeddings.transpose() * image).cwiseQuotient(text_norms.transpose());
  const Eigen::VectorXd logits = cosines / temperature;
  const Eigen::VectorXd e = (logits.array() - logits.maxCoeff()).exp();
  return {std::move(image_id), e / e.sum()};
}

double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return a.dot(b) / (a.norm() * b.norm());
}

MatchResult match_top_k(const SemanticProfile& painting, std::span<const SemanticProfile> photos, int k) {
  if (k <= 0) throw Error(ErrorCode::InvalidK, "K must be at least 1");
  if (static_cast<std::size_t>(k) > photos.size())
    throw Error(ErrorCode::InsufficientCandidates,
                "K=" + std::to_string(k) + " exceeds " + std::to_string(photos.size()) + " photos");
  std::vector<ScoredPhoto> scored;
  scored.reserve(photos.size());
  for (const auto& p : photos) {
    if (p.weights.size() != painting.weights.size())
      throw Error(ErrorCode::DimensionError, "profile " + p.image_id + " uses a different dictionary");
    scored.push_back({p.image_id, cosine_similarity(painting.weights, p.weights)});
  }
  const auto before = [](const ScoredPhoto& a, const ScoredPhoto& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.photo_id < b.photo_id;
  };
  std::partial_sort(scored.begin(), scored.begin() + k, scored.end(), before);
  scored.resize(static_cast<std::size_t>(k));
  return {painting.image_id, std::move(scored)};
}

namespace {

std::vector<SemanticProfile> profile_all(const std::vector<const ImageRecord*>& records,
                                         const Eigen::MatrixXd& text_embeddings, MatchingBackends& backends) {
  std::vector<SemanticProfile> out(records.size());
  // The backend may not be thread-safe; encoding is serialized, profiling is not.
  std::mutex encoder_mutex;
  parallel_for(records.size(), backends.workers, [&](std::size_t i) {
    EncodedImage enc;
    {
      std::lock_guard lock(encoder_mutex);
      enc = encode_image(*records[i], backends.image, backends.cache);
    }
    out[i] = semantic_profile(records[i]->id, enc.embedding, text_embeddings, backends.temperature);
  });
  return out;
}

}  // namespace

DatasetManifest build_clip_matched_dataset(const DatasetManifest& paintings, const DatasetManifest& photos,
                                           const Dictionary& dict, int k, MatchingBackends& backends) {
  if (k <= 0) throw Error(ErrorCode::InvalidK, "K must be at least 1");
  const auto painting_records = paintings.with_tag(DomainTag::Painting);
  const auto photo_records = photos.with_tag(DomainTag::Photo);
  if (painting_records.empty()) throw Error(ErrorCode::EmptyCorpus, "painting manifest has no paintings");
  if (photo_records.empty()) throw Error(ErrorCode::EmptyCorpus, "photo manifest has no photos");
  if (static_cast<std::size_t>(k) > photo_records.size())
    throw Error(ErrorCode::InsufficientCandidates,
                "K=" + std::to_string(k) + " exceeds " + std::to_string(photo_records.size()) + " photos");

  const Eigen::MatrixXd text_embeddings = encode_texts(dict, backends.text);
  const auto painting_profiles = profile_all(painting_records, text_embeddings, backends);
  const auto photo_profiles = profile_all(photo_records, text_embeddings, backends);

  DatasetManifest out;
  out.name = paintings.name + "+" + photos.name + "-k" + std::to_string(k);
  out.created_at = utc_timestamp();
  for (const auto* r : painting_records) out.records.push_back(*r);
  for (const auto* r : photo_records) out.records.push_back(*r);
  for (const auto& profile : painting_profiles) {
    const MatchResult match = match_top_k(profile, photo_profiles, k);
    for (std::size_t i = 0; i < match.matches.size(); ++i)
      out.pairs.push_back({match.painting_id, match.matches[i].photo_id, static_cast<int>(i) + 1,
                           match.matches[i].score});
  }
  std::ostringstream note;
  note << "1-to-" << k << " dictionary-profile matching; dictionary " << dict.version << " ("
       << dictionary_hash(dict).substr(0, 12) << "); text encoder " << backends.text.version() << "; image encoder "
       << backends.image.version() << "; temperature " << backends.temperature;
  out.provenance_note = note.str();
  out.validate();
  return out;
}

}  // namespace p2d
