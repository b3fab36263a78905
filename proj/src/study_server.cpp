#include "p2d/study_server.hpp"

#include "p2d/error.hpp"
#include "p2d/image.hpp"
#include "p2d/study.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <map>
#include <shared_mutex>

namespace p2d {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::NotFound:
    case ErrorCode::UnknownSession:
      return 404;
    case ErrorCode::OutOfOrder:
    case ErrorCode::DuplicateResponse:
    case ErrorCode::NoData:
      return 409;
    case ErrorCode::InvalidRating:
    case ErrorCode::InvalidChoice:
    case ErrorCode::InvalidArgument:
    case ErrorCode::NotEnoughMaterial:
      return 422;
    case ErrorCode::IncompatibleManifest:
      return 400;
    default:
      return 500;
  }
}

void reply(httplib::Response& res, int status, json body) {
  body["api_version"] = kStudyApiVersion;
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, int status, const std::string& code, const std::string& message) {
  reply(res, status, {{"error", {{"code", code}, {"message", message}}}});
}

json parse_body(const httplib::Request& req) {
  json body = req.body.empty() ? json::object() : json::parse(req.body);
  if (!body.is_object()) throw Error(ErrorCode::InvalidArgument, "request body must be a JSON object");
  if (body.contains("api_version") && body["api_version"] != kStudyApiVersion)
    throw Error(ErrorCode::IncompatibleManifest, "unsupported api_version");
  return body;
}

std::string asset_url(const StudyDefinition& study, const std::string& image_id) {
  return "/assets/" + study.study_id + "/" + study.token_for(image_id);
}

/// Real-scene ids embed their painting id, so only the opaque asset url is sent for them.
json next_payload(const StudyDefinition& study, const NextQuestion& q) {
  if (q.done) return {{"done", true}};
  json j = {{"done", false},
            {"index", q.index},
            {"kind", to_string(q.kind)},
            {"real_scene", {{"url", asset_url(study, q.real_scene_id)}}}};
  if (q.kind == QuestionKind::Qs) {
    json candidates = json::array();
    for (const auto& c : q.candidates) candidates.push_back({{"id", c}, {"url", asset_url(study, c)}});
    j["candidates"] = candidates;
  } else {
    j["painting"] = {{"id", q.painting_id}, {"url", asset_url(study, q.painting_id)}};
  }
  return j;
}

}  // namespace

struct StudyServer::Impl {
  fs::path root;
  httplib::Server http;
  mutable std::shared_mutex registry_mutex;
  std::map<std::string, std::unique_ptr<StudyStore>> stores;

  void add(const fs::path& dir) {
    auto store = std::make_unique<StudyStore>(dir);
    const std::string id = store->definition().study_id;
    stores.emplace(id, std::move(store));
  }

  StudyStore& find_study(const std::string& id) {
    std::shared_lock lock(registry_mutex);
    const auto it = stores.find(id);
    if (it == stores.end()) throw Error(ErrorCode::NotFound, "unknown study " + id);
    return *it->second;
  }

  StudyStore& find_session(const std::string& session_id) {
    std::shared_lock lock(registry_mutex);
    for (auto& [id, store] : stores)
      if (store->has_session(session_id)) return *store;
    throw Error(ErrorCode::UnknownSession, session_id);
  }

  /// Wraps a handler so library errors and malformed JSON become JSON error replies.
  template <typename Fn>
  httplib::Server::Handler guarded(Fn fn) {
    return [fn](const httplib::Request& req, httplib::Response& res) {
      try {
        fn(req, res);
      } catch (const Error& e) {
        reply_error(res, http_status(e.code()), std::string(to_string(e.code())), e.what());
      } catch (const json::exception& e) {
        reply_error(res, 400, "BadRequest", e.what());
      } catch (const std::exception& e) {
        reply_error(res, 500, "Internal", e.what());
      }
    };
  }

  void routes() {
    http.Post("/study", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const json body = parse_body(req);
      const RunRecord run = RunRecord::load(body.at("run_record").get<std::string>());
      const StudyDefinition study =
          create_study(run, body.value("n_question_sets", 5), body.value("seed", std::uint64_t{0}));
      std::unique_lock lock(registry_mutex);
      int status = 200;
      if (!stores.count(study.study_id)) {
        const fs::path dir = root / study.study_id;
        if (!fs::exists(dir / "study.json")) StudyStore::initialize(dir, study);
        add(dir);
        status = 201;
      }
      reply(res, status, {{"study_id", study.study_id}, {"n_question_sets", study.sets.size()}});
    }));

    http.Post("/session", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const json body = parse_body(req);
      std::string study_id = body.value("study_id", "");
      if (study_id.empty()) {
        std::shared_lock lock(registry_mutex);
        if (stores.size() != 1) throw Error(ErrorCode::InvalidArgument, "study_id is required");
        study_id = stores.begin()->first;
      }
      StudyStore& store = find_study(study_id);
      reply(res, 201,
            {{"session_id", store.open_session()},
             {"study_id", study_id},
             {"n_question_sets", store.definition().sets.size()}});
    }));

    http.Get(R"(/session/([^/]+)/next)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const std::string sid = req.matches[1];
      StudyStore& store = find_session(sid);
      reply(res, 200, next_payload(store.definition(), store.next(sid)));
    }));

    http.Post(R"(/session/([^/]+)/response)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const std::string sid = req.matches[1];
      StudyStore& store = find_session(sid);
      const json body = parse_body(req);
      StudyResponse r;
      r.session_id = sid;
      r.question_index = body.at("question_index").get<int>();
      r.kind = parse_question_kind(body.at("kind").get<std::string>());
      if (r.kind == QuestionKind::Qs)
        r.qs_choice = body.at("choice").get<std::string>();
      else
        r.qq_rating = body.at("rating").get<int>();
      r.request_id = body.value("request_id", "");
      const Acknowledgment ack = store.record_response(r);
      reply(res, ack.replayed ? 200 : 201,
            {{"accepted", true},
             {"replayed", ack.replayed},
             {"question_index", ack.question_index},
             {"kind", to_string(ack.kind)},
             {"next", next_payload(store.definition(), store.next(sid))}});
    }));

    http.Get(R"(/study/([^/]+)/aggregate)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      json body = json::parse(find_study(req.matches[1]).aggregate().to_json());
      body["study_id"] = req.matches[1];
      reply(res, 200, body);
    }));

    http.Get(R"(/assets/([^/]+)/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const StudyDefinition& study = find_study(req.matches[1]).definition();
      const auto it = study.assets.find(req.matches[2]);
      if (it == study.assets.end()) throw Error(ErrorCode::NotFound, "unknown asset " + std::string(req.matches[2]));
      const auto bytes = read_file_bytes(it->second);
      res.set_content(std::string(bytes.begin(), bytes.end()), "image/png");
    }));
  }
};

StudyServer::StudyServer(fs::path root, std::optional<fs::path> static_dir) : impl_(std::make_unique<Impl>()) {
  impl_->root = std::move(root);
  fs::create_directories(impl_->root);
  if (fs::exists(impl_->root / "study.json")) impl_->add(impl_->root);
  for (const auto& entry : fs::directory_iterator(impl_->root))
    if (entry.is_directory() && fs::exists(entry.path() / "study.json")) impl_->add(entry.path());
  impl_->routes();
  if (static_dir && !impl_->http.set_mount_point("/", static_dir->string()))
    throw Error(ErrorCode::NotFound, "static directory " + static_dir->string());
}

StudyServer::~StudyServer() { stop(); }

int StudyServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = impl_->http.bind_to_any_port(host);
    if (bound < 0) throw Error(ErrorCode::Io, "cannot bind " + host);
    return bound;
  }
  if (!impl_->http.bind_to_port(host, port)) throw Error(ErrorCode::Io, "cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void StudyServer::run() { impl_->http.listen_after_bind(); }

void StudyServer::stop() {
  if (impl_) impl_->http.stop();
}

StudyStore& StudyServer::store(const std::string& study_id) { return impl_->find_study(study_id); }

}  // namespace p2d
