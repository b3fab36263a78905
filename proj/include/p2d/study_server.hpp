#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

namespace p2d {

class StudyStore;

inline constexpr int kStudyApiVersion = 1;

/// HTTP front end for the study stores under a root directory. The root itself may hold a
/// study; every immediate subdirectory with a study.json is served as well, and POST /study
/// creates new ones there.
///
///   POST /study                      {run_record, n_question_sets, seed}
///   POST /session                    {study_id}
///   GET  /session/{id}/next
///   POST /session/{id}/response      {question_index, kind, choice | rating, request_id?}
///   GET  /study/{id}/aggregate
///   GET  /assets/{image_id}
class StudyServer {
 public:
  explicit StudyServer(std::filesystem::path root, std::optional<std::filesystem::path> static_dir = std::nullopt);
  ~StudyServer();
  StudyServer(const StudyServer&) = delete;
  StudyServer& operator=(const StudyServer&) = delete;

  /// Port 0 picks a free port. Returns the bound port. Throws Io.
  int bind(const std::string& host, int port);
  /// Blocks until stop().
  void run();
  void stop();

  StudyStore& store(const std::string& study_id);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace p2d
