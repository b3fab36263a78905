#pragma once

#include "p2d/pipeline.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace p2d {

/// One question set: a structural-identification question followed by a realism rating.
struct StudyQuestionSet {
  int index = 0;  // 1-based
  std::string real_scene_id;
  std::vector<std::string> candidates;  // five painting ids, shuffled
  std::string correct_id;
  std::string qq_painting_id;
  std::string qq_real_scene_id;
};

struct StudyDefinition {
  static constexpr int kSchemaVersion = 1;

  std::string study_id;
  std::string run_id;
  std::uint64_t seed = 0;
  std::vector<StudyQuestionSet> sets;
  std::map<std::string, std::string> assets;        // opaque asset token -> file path
  std::map<std::string, std::string> asset_tokens;  // image id -> asset token

  /// Tokens are assigned in shuffled order, so they say nothing about which painting
  /// a real-scene image came from.
  const std::string& token_for(const std::string& image_id) const;

  std::string to_json() const;
  static StudyDefinition from_json(const std::string& text);
};

/// Needs at least five paintings with real-scene outputs. Targets are drawn without
/// replacement; each set's four distractors are drawn uniformly from the other paintings.
/// Throws NotEnoughMaterial / InvalidArgument.
StudyDefinition create_study(const RunRecord& run, int n_question_sets, std::uint64_t seed);

enum class QuestionKind { Qs, Qq };

struct StudyResponse {
  std::string session_id;
  int question_index = 0;
  QuestionKind kind = QuestionKind::Qs;
  std::string qs_choice;  // painting id, Qs only
  int qq_rating = 0;      // 1..5, Qq only
  std::string submitted_at;
  std::string request_id;  // optional client token for idempotent retries
};

struct QuestionAggregate {
  int index = 0;
  double qs_percent = 0.0;
  double qq_mean = 0.0;
  int qs_n = 0;
  int qq_n = 0;
};

struct StudyAggregate {
  std::vector<QuestionAggregate> questions;
  double qs_avg = 0.0;
  double qq_avg = 0.0;
  int n_participants = 0;  // complete sessions
  int n_sessions = 0;

  std::string to_json() const;
};

/// Averages are formed as exact rationals and divided once, so they equal the
/// arithmetic mean of the per-question values. Throws NoData without a complete session.
StudyAggregate aggregate_responses(const StudyDefinition& study, std::span<const StudyResponse> responses);

/// What a participant sees next. The correct answer is never included.
struct NextQuestion {
  bool done = false;
  int index = 0;
  QuestionKind kind = QuestionKind::Qs;
  std::string real_scene_id;
  std::vector<std::string> candidates;  // Qs
  std::string painting_id;              // Qq
};

struct Acknowledgment {
  std::string session_id;
  int question_index = 0;
  QuestionKind kind = QuestionKind::Qs;
  bool replayed = false;  // same request_id seen before; nothing new stored
};

/// A study directory: study.json, sessions.jsonl, responses.jsonl (append-only) and a
/// derived aggregate.json. All methods are safe to call concurrently.
class StudyStore {
 public:
  /// Writes study.json into a new or empty directory.
  static void initialize(const std::filesystem::path& dir, const StudyDefinition& study);

  /// Throws NotFound when dir has no study.json.
  explicit StudyStore(std::filesystem::path dir);

  const StudyDefinition& definition() const { return study_; }
  const std::filesystem::path& directory() const { return dir_; }

  std::string open_session();
  bool has_session(const std::string& session_id) const;
  NextQuestion next(const std::string& session_id) const;

  /// Enforces Qs before Qq within a set and sets in order.
  /// Throws UnknownSession, InvalidArgument, DuplicateResponse, OutOfOrder, InvalidRating, InvalidChoice.
  Acknowledgment record_response(StudyResponse response);

  std::vector<StudyResponse> responses() const;

  /// Aggregates a snapshot of the log and refreshes aggregate.json.
  StudyAggregate aggregate();

 private:
  std::size_t answered(const std::string& session_id) const;
  void append_line(const std::filesystem::path& file, const std::string& line);

  std::filesystem::path dir_;
  StudyDefinition study_;
  mutable std::mutex mutex_;
  std::vector<std::string> sessions_;
  std::vector<StudyResponse> responses_;
};

std::string to_string(QuestionKind kind);
QuestionKind parse_question_kind(const std::string& text);

std::string response_to_json(const StudyResponse& r);
StudyResponse response_from_json(const std::string& text);

}  // namespace p2d
