#include "p2d/study.hpp"

#include "p2d/error.hpp"
#include "p2d/hash.hpp"
#include "p2d/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace p2d {
namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(QuestionKind kind) { return kind == QuestionKind::Qs ? "qs" : "qq"; }

QuestionKind parse_question_kind(const std::string& text) {
  if (text == "qs") return QuestionKind::Qs;
  if (text == "qq") return QuestionKind::Qq;
  throw Error(ErrorCode::InvalidArgument, "question kind must be qs or qq, got '" + text + "'");
}

// ---------------------------------------------------------------------------
// Definition

std::string StudyDefinition::to_json() const {
  json sets_json = json::array();
  for (const auto& s : sets)
    sets_json.push_back({{"index", s.index},
                         {"real_scene_id", s.real_scene_id},
                         {"candidates", s.candidates},
                         {"correct_id", s.correct_id},
                         {"qq_painting_id", s.qq_painting_id},
                         {"qq_real_scene_id", s.qq_real_scene_id}});
  return json{{"schema_version", kSchemaVersion}, {"study_id", study_id}, {"run_id", run_id},
              {"seed", seed},                     {"sets", sets_json},   {"assets", assets},
              {"asset_tokens", asset_tokens}}
      .dump(2);
}

StudyDefinition StudyDefinition::from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    if (j.at("schema_version").get<int>() != kSchemaVersion)
      throw Error(ErrorCode::IncompatibleManifest, "unsupported study schema");
    StudyDefinition d;
    d.study_id = j.at("study_id").get<std::string>();
    d.run_id = j.value("run_id", "");
    d.seed = j.value("seed", std::uint64_t{0});
    for (const auto& s : j.at("sets"))
      d.sets.push_back({s.at("index").get<int>(), s.at("real_scene_id").get<std::string>(),
                        s.at("candidates").get<std::vector<std::string>>(), s.at("correct_id").get<std::string>(),
                        s.at("qq_painting_id").get<std::string>(), s.at("qq_real_scene_id").get<std::string>()});
    d.assets = j.value("assets", std::map<std::string, std::string>{});
    d.asset_tokens = j.value("asset_tokens", std::map<std::string, std::string>{});
    return d;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::IncompatibleManifest, std::string("study definition: ") + e.what());
  }
}

const std::string& StudyDefinition::token_for(const std::string& image_id) const {
  const auto it = asset_tokens.find(image_id);
  if (it == asset_tokens.end()) throw Error(ErrorCode::NotFound, "no asset for " + image_id);
  return it->second;
}

StudyDefinition create_study(const RunRecord& run, int n_question_sets, std::uint64_t seed) {
  constexpr std::size_t kCandidates = 5;
  if (n_question_sets < 1) throw Error(ErrorCode::InvalidArgument, "n_question_sets must be >= 1");

  std::vector<const ItemRecord*> eligible;
  for (const auto& item : run.items)
    if (!item.real_scene_id.empty() && !item.real_scene_path.empty()) eligible.push_back(&item);
  std::sort(eligible.begin(), eligible.end(),
            [](const ItemRecord* a, const ItemRecord* b) { return a->painting_id < b->painting_id; });
  if (eligible.size() < kCandidates)
    throw Error(ErrorCode::NotEnoughMaterial, "need at least 5 paintings with real-scene outputs, run has " +
                                                  std::to_string(eligible.size()));
  if (static_cast<std::size_t>(n_question_sets) > eligible.size())
    throw Error(ErrorCode::NotEnoughMaterial, std::to_string(n_question_sets) + " question sets requested but only " +
                                                  std::to_string(eligible.size()) + " paintings are available");

  Rng rng(seed);
  std::vector<std::size_t> order(eligible.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order.begin(), order.end());

  StudyDefinition study;
  std::map<std::string, std::string> paths;
  study.run_id = run.run_id;
  study.seed = seed;
  for (int q = 0; q < n_question_sets; ++q) {
    const std::size_t target = order[static_cast<std::size_t>(q)];
    std::vector<std::size_t> others;
    for (std::size_t i = 0; i < eligible.size(); ++i)
      if (i != target) others.push_back(i);
    // Partial Fisher-Yates: the first four positions become a uniform sample.
    for (std::size_t i = 0; i + 1 < kCandidates; ++i)
      std::swap(others[i], others[i + rng.below(others.size() - i)]);

    const ItemRecord& item = *eligible[target];
    StudyQuestionSet set;
    set.index = q + 1;
    set.real_scene_id = item.real_scene_id;
    set.correct_id = item.painting_id;
    set.candidates.push_back(item.painting_id);
    for (std::size_t i = 0; i + 1 < kCandidates; ++i) set.candidates.push_back(eligible[others[i]]->painting_id);
    rng.shuffle(set.candidates.begin(), set.candidates.end());
    set.qq_painting_id = item.painting_id;
    set.qq_real_scene_id = item.real_scene_id;
    study.sets.push_back(std::move(set));

    paths[item.real_scene_id] = item.real_scene_path;
    for (const auto& id : study.sets.back().candidates) paths[id] = run.item(id)->painting_path;
  }
  std::vector<std::string> ids;
  for (const auto& [id, path] : paths) ids.push_back(id);
  rng.shuffle(ids.begin(), ids.end());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const std::string token = "asset" + std::to_string(i);
    study.asset_tokens[ids[i]] = token;
    study.assets[token] = paths[ids[i]];
  }
  study.study_id = sha256_hex(study.to_json()).substr(0, 12);
  return study;
}

// ---------------------------------------------------------------------------
// Aggregation

namespace {

/// Non-negative rational with gcd-reduced terms.
struct Rational {
  long long num = 0;
  long long den = 1;

  Rational& operator+=(const Rational& o) {
    const long long g = std::gcd(den, o.den);
    num = num * (o.den / g) + o.num * (den / g);
    den = den / g * o.den;
    reduce();
    return *this;
  }
  void reduce() {
    const long long g = std::gcd(num, den);
    if (g > 1) {
      num /= g;
      den /= g;
    }
  }
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
};

Rational ratio(long long num, long long den) {
  Rational r{num, den};
  r.reduce();
  return r;
}

}  // namespace

StudyAggregate aggregate_responses(const StudyDefinition& study, std::span<const StudyResponse> responses) {
  const std::size_t n = study.sets.size();
  const std::size_t needed = 2 * n;
  std::map<std::string, std::set<std::pair<int, QuestionKind>>> per_session;
  for (const auto& r : responses) per_session[r.session_id].insert({r.question_index, r.kind});

  StudyAggregate agg;
  agg.n_sessions = static_cast<int>(per_session.size());
  for (const auto& [id, answered] : per_session)
    if (answered.size() == needed) ++agg.n_participants;
  if (agg.n_participants == 0) throw Error(ErrorCode::NoData, "no complete sessions");

  std::vector<long long> correct(n, 0), qs_n(n, 0), rating_sum(n, 0), qq_n(n, 0);
  for (const auto& r : responses) {
    if (r.question_index < 1 || static_cast<std::size_t>(r.question_index) > n) continue;
    const std::size_t q = static_cast<std::size_t>(r.question_index) - 1;
    if (r.kind == QuestionKind::Qs) {
      ++qs_n[q];
      if (r.qs_choice == study.sets[q].correct_id) ++correct[q];
    } else {
      ++qq_n[q];
      rating_sum[q] += r.qq_rating;
    }
  }

  Rational qs_total, qq_total;
  for (std::size_t q = 0; q < n; ++q) {
    QuestionAggregate a;
    a.index = study.sets[q].index;
    a.qs_n = static_cast<int>(qs_n[q]);
    a.qq_n = static_cast<int>(qq_n[q]);
    if (qs_n[q] > 0) {
      const Rational pct = ratio(100 * correct[q], qs_n[q]);
      a.qs_percent = pct.value();
      qs_total += pct;
    }
    if (qq_n[q] > 0) {
      const Rational mean = ratio(rating_sum[q], qq_n[q]);
      a.qq_mean = mean.value();
      qq_total += mean;
    }
    agg.questions.push_back(a);
  }
  const long long count = static_cast<long long>(n);
  agg.qs_avg = ratio(qs_total.num, qs_total.den * count).value();
  agg.qq_avg = ratio(qq_total.num, qq_total.den * count).value();
  return agg;
}

std::string StudyAggregate::to_json() const {
  json qs = json::array();
  for (const auto& q : questions)
    qs.push_back({{"index", q.index}, {"qs_percent", q.qs_percent}, {"qq_mean", q.qq_mean}, {"qs_n", q.qs_n},
                  {"qq_n", q.qq_n}});
  return json{{"questions", qs},
              {"qs_avg", qs_avg},
              {"qq_avg", qq_avg},
              {"n_participants", n_participants},
              {"n_sessions", n_sessions}}
      .dump(2);
}

// ---------------------------------------------------------------------------
// Responses

std::string response_to_json(const StudyResponse& r) {
  json j = {{"session_id", r.session_id},
            {"question_index", r.question_index},
            {"kind", to_string(r.kind)},
            {"submitted_at", r.submitted_at}};
  if (r.kind == QuestionKind::Qs)
    j["qs_choice"] = r.qs_choice;
  else
    j["qq_rating"] = r.qq_rating;
  if (!r.request_id.empty()) j["request_id"] = r.request_id;
  return j.dump();
}

StudyResponse response_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    StudyResponse r;
    r.session_id = j.value("session_id", "");
    r.question_index = j.at("question_index").get<int>();
    r.kind = parse_question_kind(j.at("kind").get<std::string>());
    r.qs_choice = j.value("qs_choice", "");
    r.qq_rating = j.value("qq_rating", 0);
    r.submitted_at = j.value("submitted_at", "");
    r.request_id = j.value("request_id", "");
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("response: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Store

namespace {

std::vector<std::string> read_lines(const fs::path& file) {
  std::vector<std::string> lines;
  std::ifstream in(file);
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) lines.push_back(line);
  return lines;
}

std::string new_token() {
  static std::mutex mutex;
  static Rng rng([] {
    std::random_device rd;
    return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  }());
  std::lock_guard lock(mutex);
  char buf[33];
  std::snprintf(buf, sizeof buf, "%016llx%016llx", static_cast<unsigned long long>(rng.next()),
                static_cast<unsigned long long>(rng.next()));
  return buf;
}

}  // namespace

void StudyStore::initialize(const fs::path& dir, const StudyDefinition& study) {
  fs::create_directories(dir);
  if (fs::exists(dir / "study.json"))
    throw Error(ErrorCode::InvalidArgument, "a study already exists in " + dir.string());
  std::ofstream out(dir / "study.json");
  if (!out) throw Error(ErrorCode::Io, "cannot write " + (dir / "study.json").string());
  out << study.to_json() << '\n';
}

StudyStore::StudyStore(fs::path dir) : dir_(std::move(dir)) {
  std::ifstream in(dir_ / "study.json");
  if (!in) throw Error(ErrorCode::NotFound, "no study.json in " + dir_.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  study_ = StudyDefinition::from_json(buf.str());

  sessions_ = read_lines(dir_ / "sessions.jsonl");
  for (auto& s : sessions_) s = json::parse(s).at("session_id").get<std::string>();
  const auto lines = read_lines(dir_ / "responses.jsonl");
  for (std::size_t i = 0; i < lines.size(); ++i) {
    try {
      responses_.push_back(response_from_json(lines[i]));
    } catch (const Error&) {
      // A torn final record from an interrupted append is dropped; anything else is corruption.
      if (i + 1 != lines.size()) throw Error(ErrorCode::IncompatibleManifest, "corrupt response log line " + std::to_string(i + 1));
    }
  }
}

void StudyStore::append_line(const fs::path& file, const std::string& line) {
  std::ofstream out(file, std::ios::app);
  if (!out) throw Error(ErrorCode::Io, "cannot append to " + file.string());
  out << line << '\n';
  out.flush();
  if (!out) throw Error(ErrorCode::Io, "write to " + file.string() + " failed");
}

std::string StudyStore::open_session() {
  const std::string id = new_token();
  std::lock_guard lock(mutex_);
  append_line(dir_ / "sessions.jsonl", json{{"session_id", id}, {"opened_at", utc_timestamp()}}.dump());
  sessions_.push_back(id);
  return id;
}

bool StudyStore::has_session(const std::string& session_id) const {
  std::lock_guard lock(mutex_);
  return std::find(sessions_.begin(), sessions_.end(), session_id) != sessions_.end();
}

std::size_t StudyStore::answered(const std::string& session_id) const {
  return static_cast<std::size_t>(std::count_if(responses_.begin(), responses_.end(),
                                                [&](const StudyResponse& r) { return r.session_id == session_id; }));
}

NextQuestion StudyStore::next(const std::string& session_id) const {
  std::lock_guard lock(mutex_);
  if (std::find(sessions_.begin(), sessions_.end(), session_id) == sessions_.end())
    throw Error(ErrorCode::UnknownSession, session_id);
  const std::size_t done = answered(session_id);
  NextQuestion q;
  if (done >= 2 * study_.sets.size()) {
    q.done = true;
    return q;
  }
  const StudyQuestionSet& set = study_.sets[done / 2];
  q.index = set.index;
  if (done % 2 == 0) {
    q.kind = QuestionKind::Qs;
    q.real_scene_id = set.real_scene_id;
    q.candidates = set.candidates;
  } else {
    q.kind = QuestionKind::Qq;
    q.real_scene_id = set.qq_real_scene_id;
    q.painting_id = set.qq_painting_id;
  }
  return q;
}

Acknowledgment StudyStore::record_response(StudyResponse response) {
  std::lock_guard lock(mutex_);
  const std::string& sid = response.session_id;
  if (std::find(sessions_.begin(), sessions_.end(), sid) == sessions_.end())
    throw Error(ErrorCode::UnknownSession, sid);
  const int n = static_cast<int>(study_.sets.size());
  if (response.question_index < 1 || response.question_index > n)
    throw Error(ErrorCode::InvalidArgument, "question_index must lie in 1.." + std::to_string(n));

  for (const auto& r : responses_) {
    if (r.session_id != sid || r.question_index != response.question_index || r.kind != response.kind) continue;
    if (!response.request_id.empty() && r.request_id == response.request_id)
      return {sid, r.question_index, r.kind, true};
    throw Error(ErrorCode::DuplicateResponse, "question " + std::to_string(response.question_index) + " " +
                                                  to_string(response.kind) + " already answered");
  }

  const std::size_t done = answered(sid);
  const int expected_index = static_cast<int>(done / 2) + 1;
  const QuestionKind expected_kind = done % 2 == 0 ? QuestionKind::Qs : QuestionKind::Qq;
  if (response.question_index != expected_index || response.kind != expected_kind)
    throw Error(ErrorCode::OutOfOrder, "expected question " + std::to_string(expected_index) + " " +
                                           to_string(expected_kind));

  const StudyQuestionSet& set = study_.sets[static_cast<std::size_t>(response.question_index) - 1];
  if (response.kind == QuestionKind::Qq) {
    if (response.qq_rating < 1 || response.qq_rating > 5)
      throw Error(ErrorCode::InvalidRating, "rating must be 1..5, got " + std::to_string(response.qq_rating));
    response.qs_choice.clear();
  } else {
    if (std::find(set.candidates.begin(), set.candidates.end(), response.qs_choice) == set.candidates.end())
      throw Error(ErrorCode::InvalidChoice, "'" + response.qs_choice + "' is not a candidate");
    response.qq_rating = 0;
  }
  if (response.submitted_at.empty()) response.submitted_at = utc_timestamp();

  append_line(dir_ / "responses.jsonl", response_to_json(response));
  responses_.push_back(response);
  return {sid, response.question_index, response.kind, false};
}

std::vector<StudyResponse> StudyStore::responses() const {
  std::lock_guard lock(mutex_);
  return responses_;
}

StudyAggregate StudyStore::aggregate() {
  const std::vector<StudyResponse> snapshot = responses();
  const StudyAggregate agg = aggregate_responses(study_, snapshot);
  std::lock_guard lock(mutex_);
  const fs::path tmp = dir_ / "aggregate.json.tmp";
  {
    std::ofstream out(tmp);
    out << agg.to_json() << '\n';
  }
  fs::rename(tmp, dir_ / "aggregate.json");
  return agg;
}

}  // namespace p2d
