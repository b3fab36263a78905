#include "p2d/error.hpp"
#include "p2d/study.hpp"
#include "p2d/study_server.hpp"

#include "fixtures.hpp"
#include "oracles.hpp"

#include <doctest.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include <set>
#include <thread>

using namespace p2d;
using p2d::testing::TempDir;
using nlohmann::json;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error raised");
  return ErrorCode::Io;
}

StudyResponse qs(const std::string& session, int index, const std::string& choice) {
  StudyResponse r;
  r.session_id = session;
  r.question_index = index;
  r.kind = QuestionKind::Qs;
  r.qs_choice = choice;
  return r;
}

StudyResponse qq(const std::string& session, int index, int rating) {
  StudyResponse r;
  r.session_id = session;
  r.question_index = index;
  r.kind = QuestionKind::Qq;
  r.qq_rating = rating;
  return r;
}

std::string wrong_choice(const StudyQuestionSet& set) {
  for (const auto& c : set.candidates)
    if (c != set.correct_id) return c;
  return {};
}

}  // namespace

TEST_SUITE("study") {
  TEST_CASE("question sets are distinct and well formed") {
    TempDir dir("create");
    const RunRecord run = testing::study_run(dir.path(), 10);
    const StudyDefinition s = create_study(run, 5, 1);
    REQUIRE(s.sets.size() == 5);
    std::set<std::string> targets;
    for (const auto& set : s.sets) {
      CHECK(set.candidates.size() == 5);
      CHECK(std::set<std::string>(set.candidates.begin(), set.candidates.end()).size() == 5);
      CHECK(std::count(set.candidates.begin(), set.candidates.end(), set.correct_id) == 1);
      CHECK(set.real_scene_id == set.correct_id + ".real_scene");
      targets.insert(set.correct_id);
      for (const auto& c : set.candidates) CHECK(s.assets.count(s.token_for(c)) == 1);
      CHECK(s.assets.count(s.token_for(set.real_scene_id)) == 1);
    }
    CHECK(targets.size() == 5);
    CHECK(create_study(run, 5, 1).to_json() == s.to_json());
    CHECK(create_study(run, 5, 2).to_json() != s.to_json());
    CHECK(StudyDefinition::from_json(s.to_json()).to_json() == s.to_json());
  }

  TEST_CASE("too few paintings") {
    TempDir dir("few");
    CHECK(code_of([&] { create_study(testing::study_run(dir.path(), 4), 3, 0); }) == ErrorCode::NotEnoughMaterial);
    CHECK(code_of([&] { create_study(testing::study_run(dir.path(), 6), 7, 0); }) == ErrorCode::NotEnoughMaterial);
  }

  TEST_CASE("protocol order, duplicates and bounds") {
    TempDir dir("protocol");
    const StudyDefinition s = create_study(testing::study_run(dir.path(), 6), 2, 3);
    StudyStore::initialize(dir / "study", s);
    StudyStore store(dir / "study");
    const std::string a = store.open_session();

    CHECK(code_of([&] { store.record_response(qq(a, 1, 4)); }) == ErrorCode::OutOfOrder);
    CHECK(code_of([&] { store.record_response(qs(a, 2, s.sets[1].correct_id)); }) == ErrorCode::OutOfOrder);
    CHECK(code_of([&] { store.record_response(qs(a, 1, "not-a-candidate")); }) == ErrorCode::InvalidChoice);
    CHECK_FALSE(store.record_response(qs(a, 1, s.sets[0].correct_id)).replayed);
    CHECK(code_of([&] { store.record_response(qs(a, 1, s.sets[0].correct_id)); }) == ErrorCode::DuplicateResponse);
    CHECK(code_of([&] { store.record_response(qq(a, 1, 6)); }) == ErrorCode::InvalidRating);
    CHECK(code_of([&] { store.record_response(qq(a, 1, 0)); }) == ErrorCode::InvalidRating);
    CHECK_NOTHROW(store.record_response(qq(a, 1, 5)));
    CHECK(code_of([&] { store.record_response(qq("ghost", 1, 5)); }) == ErrorCode::UnknownSession);
    CHECK(code_of([&] { store.record_response(qs(a, 9, "x")); }) == ErrorCode::InvalidArgument);

    StudyResponse retry = qs(a, 2, s.sets[1].correct_id);
    retry.request_id = "req-1";
    CHECK_FALSE(store.record_response(retry).replayed);
    CHECK(store.record_response(retry).replayed);
    CHECK(store.responses().size() == 3);

    CHECK(code_of([&] { store.aggregate(); }) == ErrorCode::NoData);
    store.record_response(qq(a, 2, 3));
    CHECK(store.next(a).done);

    StudyStore reopened(dir / "study");
    CHECK(reopened.responses().size() == 4);
    CHECK(reopened.next(a).done);
  }

  TEST_CASE("next question never carries the answer") {
    TempDir dir("next");
    const StudyDefinition s = create_study(testing::study_run(dir.path(), 5), 5, 4);
    StudyStore::initialize(dir / "study", s);
    StudyStore store(dir / "study");
    const std::string a = store.open_session();
    const NextQuestion q = store.next(a);
    CHECK(q.kind == QuestionKind::Qs);
    CHECK(q.index == 1);
    CHECK(q.candidates == s.sets[0].candidates);
    store.record_response(qs(a, 1, wrong_choice(s.sets[0])));
    const NextQuestion q2 = store.next(a);
    CHECK(q2.kind == QuestionKind::Qq);
    CHECK(q2.painting_id == s.sets[0].qq_painting_id);
  }

  TEST_CASE("extremes and Table 1 arithmetic") {
    TempDir dir("table");
    const StudyDefinition s = create_study(testing::study_run(dir.path(), 5), 5, 0);
    std::vector<StudyResponse> all5;
    for (int p = 0; p < 3; ++p)
      for (int i = 1; i <= 5; ++i) {
        all5.push_back(qs("s" + std::to_string(p), i, s.sets[static_cast<std::size_t>(i - 1)].correct_id));
        all5.push_back(qq("s" + std::to_string(p), i, 5));
      }
    const StudyAggregate top = aggregate_responses(s, all5);
    CHECK(top.qs_avg == 100.0);
    CHECK(top.qq_avg == 5.0);
    CHECK(top.n_participants == 3);

    const int correct[] = {90, 100, 93, 95, 90};
    const int rating_sum[] = {430, 430, 410, 420, 420};
    std::vector<StudyResponse> table;
    for (int p = 0; p < 100; ++p) {
      const std::string sid = "p" + std::to_string(p);
      for (int i = 0; i < 5; ++i) {
        const auto& set = s.sets[static_cast<std::size_t>(i)];
        table.push_back(qs(sid, i + 1, p < correct[i] ? set.correct_id : wrong_choice(set)));
        // Ratings of 4 and 5 chosen so the hundred ratings sum to rating_sum[i].
        table.push_back(qq(sid, i + 1, p < rating_sum[i] - 400 ? 5 : 4));
      }
    }
    const StudyAggregate agg = aggregate_responses(s, table);
    CHECK(agg.questions[2].qs_percent == 93.0);
    CHECK(agg.questions[2].qq_mean == 4.1);
    CHECK(agg.qs_avg == 93.6);
    CHECK(agg.qq_avg == 4.22);
  }

  TEST_CASE("simulated sessions agree with an independent tally in any order") {
    TempDir dir("tally");
    const StudyDefinition s = create_study(testing::study_run(dir.path(), 8), 5, 6);
    Rng rng(8);
    std::vector<StudyResponse> log;
    oracle::Tally tally;
    for (int p = 0; p < 40; ++p) {
      const std::string sid = "sess" + std::to_string(p);
      const int answered = p % 7 == 0 ? 3 : 5;  // a few dropouts
      for (int i = 1; i <= answered; ++i) {
        const auto& set = s.sets[static_cast<std::size_t>(i - 1)];
        const std::string choice = set.candidates[rng.below(5)];
        const int rating = 1 + static_cast<int>(rng.below(5));
        log.push_back(qs(sid, i, choice));
        log.push_back(qq(sid, i, rating));
        auto& [c, t] = tally.qs[i];
        c += choice == set.correct_id;
        ++t;
        auto& [sum, n] = tally.qq[i];
        sum += rating;
        ++n;
      }
    }
    const StudyAggregate agg = aggregate_responses(s, log);
    CHECK(agg.qs_avg == doctest::Approx(tally.qs_avg()).epsilon(1e-12));
    CHECK(agg.qq_avg == doctest::Approx(tally.qq_avg()).epsilon(1e-12));
    CHECK(agg.n_participants == 34);
    CHECK(agg.n_sessions == 40);

    for (int round = 0; round < 3; ++round) {
      rng.shuffle(log.begin(), log.end());
      const StudyAggregate shuffled = aggregate_responses(s, log);
      CHECK(shuffled.qs_avg == agg.qs_avg);
      CHECK(shuffled.qq_avg == agg.qq_avg);
    }
  }

  TEST_CASE("concurrent sessions all land in the log") {
    TempDir dir("concurrent");
    const StudyDefinition s = create_study(testing::study_run(dir.path(), 5), 5, 2);
    StudyStore::initialize(dir / "study", s);
    StudyStore store(dir / "study");
    std::vector<std::thread> threads;
    for (int t = 0; t < 4; ++t)
      threads.emplace_back([&] {
        const std::string sid = store.open_session();
        for (int i = 1; i <= 5; ++i) {
          store.record_response(qs(sid, i, s.sets[static_cast<std::size_t>(i - 1)].correct_id));
          store.record_response(qq(sid, i, 4));
        }
      });
    for (auto& t : threads) t.join();
    CHECK(StudyStore(dir / "study").responses().size() == 40);
    CHECK(store.aggregate().n_participants == 4);
    CHECK(std::filesystem::exists(dir / "study" / "aggregate.json"));
  }
}

TEST_SUITE("study_http") {
  TEST_CASE("scripted sessions over HTTP") {
    TempDir dir("http");
    const RunRecord run = testing::study_run(dir.path(), 6);
    std::ofstream(dir / "run_record.json") << run.to_json();

    StudyServer server(dir / "studies");
    const int port = server.bind("127.0.0.1", 0);
    std::thread loop([&] { server.run(); });
    httplib::Client client("127.0.0.1", port);
    client.set_connection_timeout(5);

    auto post = [&](const std::string& path, const json& body) {
      auto res = client.Post(path, body.dump(), "application/json");
      REQUIRE(res);
      return std::make_pair(res->status, json::parse(res->body));
    };
    auto get = [&](const std::string& path) {
      auto res = client.Get(path);
      REQUIRE(res);
      return std::make_pair(res->status, res->body);
    };

    const auto [created, study] =
        post("/study", {{"api_version", 1}, {"run_record", (dir / "run_record.json").string()}, {"n_question_sets", 5}, {"seed", 3}});
    CHECK(created == 201);
    const std::string study_id = study["study_id"];
    CHECK(study["api_version"] == 1);
    const StudyDefinition& def = server.store(study_id).definition();

    oracle::Tally tally;
    for (int p = 0; p < 3; ++p) {
      const auto [status, session] = post("/session", {{"study_id", study_id}});
      CHECK(status == 201);
      const std::string sid = session["session_id"];
      if (p == 0) {
        const auto [bad, err] = post("/session/" + sid + "/response", {{"question_index", 1}, {"kind", "qq"}, {"rating", 3}});
        CHECK(bad == 409);
        CHECK(err["error"]["code"] == "OutOfOrder");
      }
      for (int i = 1; i <= 5; ++i) {
        const auto [s1, next] = get("/session/" + sid + "/next");
        CHECK(s1 == 200);
        const json q = json::parse(next);
        CHECK(q["kind"] == "qs");
        CHECK(q.dump().find("correct") == std::string::npos);
        const auto& set = def.sets[static_cast<std::size_t>(i - 1)];
        CHECK(q.dump().find(set.real_scene_id) == std::string::npos);
        CHECK(q["real_scene"]["url"] == "/assets/" + study_id + "/" + def.token_for(set.real_scene_id));
        const std::string choice = q["candidates"][(p + i) % 5]["id"];
        const auto [s2, ack] = post("/session/" + sid + "/response",
                                    {{"question_index", i}, {"kind", "qs"}, {"choice", choice}, {"request_id", "r" + std::to_string(i)}});
        CHECK(s2 == 201);
        CHECK(ack["next"]["kind"] == "qq");
        const int rating = 1 + (p * 2 + i) % 5;
        const auto [s3, ack2] = post("/session/" + sid + "/response", {{"question_index", i}, {"kind", "qq"}, {"rating", rating}});
        CHECK(s3 == 201);
        auto& [c, t] = tally.qs[i];
        c += choice == def.sets[static_cast<std::size_t>(i - 1)].correct_id;
        ++t;
        auto& [sum, n] = tally.qq[i];
        sum += rating;
        ++n;
      }
      CHECK(json::parse(get("/session/" + sid + "/next").second)["done"] == true);
    }

    const auto [s4, body] = get("/study/" + study_id + "/aggregate");
    CHECK(s4 == 200);
    const json agg = json::parse(body);
    CHECK(agg["n_participants"] == 3);
    CHECK(agg["qs_avg"].get<double>() == doctest::Approx(tally.qs_avg()).epsilon(1e-12));
    CHECK(agg["qq_avg"].get<double>() == doctest::Approx(tally.qq_avg()).epsilon(1e-12));

    const auto [s5, png] = get("/assets/" + study_id + "/" + def.token_for(def.sets[0].real_scene_id));
    CHECK(s5 == 200);
    CHECK(png.substr(1, 3) == "PNG");
    CHECK(get("/assets/" + study_id + "/unknown").first == 404);
    CHECK(get("/assets/" + study_id + "/" + def.sets[0].real_scene_id).first == 404);
    CHECK(get("/session/nobody/next").first == 404);
    const auto [s6, bad_rating] = post("/session/x/response", {{"question_index", 1}});
    CHECK(s6 == 404);

    server.stop();
    loop.join();
  }
}
