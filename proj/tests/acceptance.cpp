// Acceptance gate: one PASS/FAIL line per criterion. Exit status is non-zero if any fails.

#include "p2d/depth.hpp"
#include "p2d/diffusion_refiner.hpp"
#include "p2d/error.hpp"
#include "p2d/pipeline.hpp"
#include "p2d/semantic_matcher.hpp"
#include "p2d/structure_score.hpp"
#include "p2d/study.hpp"
#include "p2d/translation_gan.hpp"

#include "fixtures.hpp"
#include "oracles.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

using namespace p2d;
using nn::Tensor;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) detail << "failed: " << what << "; ";
    pass = pass && ok;
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

std::vector<Tensor> random_batch(Rng& rng, int n, int size) {
  std::vector<Tensor> out;
  for (int i = 0; i < n; ++i) {
    Tensor t = Tensor::zeros(3, size, size);
    for (Eigen::Index j = 0; j < t.data.size(); ++j) t.data.data()[j] = rng.uniform(0.02, 0.98);
    out.push_back(t);
  }
  return out;
}

// ---------------------------------------------------------------------------

void matching(Outcome& out) {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(2024);
  const int ks[] = {1, 3, 5, 10};
  int mismatches = 0;
  for (int instance = 0; instance < 100; ++instance) {
    const int k = ks[instance % 4];
    const int dict = 4 + static_cast<int>(rng.below(61));
    const int n = k + static_cast<int>(rng.below(static_cast<std::uint64_t>(1000 - k + 1)));
    const int dim = 16;
    Eigen::MatrixXd texts(dim, dict);
    for (Eigen::Index i = 0; i < texts.size(); ++i) texts.data()[i] = rng.normal();
    auto embed = [&] {
      Eigen::VectorXd e(dim);
      for (int i = 0; i < dim; ++i) e[i] = rng.normal();
      return e;
    };
    std::vector<SemanticProfile> photos;
    for (int i = 0; i < n; ++i) {
      // Roughly one photo in twenty repeats an earlier profile, creating exact ties.
      if (i > 0 && rng.below(20) == 0)
        photos.push_back({"photo" + std::to_string(i), photos[rng.below(static_cast<std::uint64_t>(i))].weights});
      else
        photos.push_back(semantic_profile("photo" + std::to_string(i), embed(), texts));
    }
    rng.shuffle(photos.begin(), photos.end());
    const SemanticProfile painting = semantic_profile("painting", embed(), texts);

    std::vector<std::pair<std::string, std::vector<double>>> plain;
    for (const auto& p : photos) plain.emplace_back(p.image_id, to_std(p.weights));
    const auto want = oracle::brute_force_top_k(to_std(painting.weights), plain, k);
    const auto got = match_top_k(painting, photos, k).matches;
    bool same = got.size() == want.size();
    for (std::size_t i = 0; same && i < want.size(); ++i) same = got[i].photo_id == want[i].first;
    mismatches += !same;
  }
  const double secs = seconds_since(t0);
  out.require(mismatches == 0, std::to_string(mismatches) + " instances differ from the oracle");
  out.require(secs < 30.0, "runtime over 30 s");
  out.detail << "100 instances, " << mismatches << " mismatches, " << secs << " s";
}

void loss_oracles(Outcome& out) {
  Rng rng(7);
  TrainConfig c;
  c.image_size = 8;
  c.generator = {4, 1};
  c.discriminator = {4, 1};
  const TranslatorPair pair = TranslatorPair::create(c);
  const auto fns = pair.functions();
  const std::vector<Tensor> ori = random_batch(rng, 2, 8), photo = random_batch(rng, 2, 8);
  std::vector<Tensor> fake_ori, fake_photo;
  for (const auto& p : photo) fake_ori.push_back(fns.gen_photo_to_ori(p));
  for (const auto& o : ori) fake_photo.push_back(fns.gen_ori_to_photo(o));

  const double d_ori = std::abs(adversarial_loss_ori(fns.disc_ori, ori, fake_ori) - oracle::adversarial(fns.disc_ori, ori, fake_ori));
  const double d_photo =
      std::abs(adversarial_loss_photo(fns.disc_photo, photo, fake_photo) - oracle::adversarial(fns.disc_photo, photo, fake_photo));
  const double d_cyc = std::abs(cycle_consistency_loss(pair, ori, photo) -
                                oracle::cycle(fns.gen_photo_to_ori, fns.gen_ori_to_photo, ori, photo));
  out.require(d_ori <= 1e-6 && d_photo <= 1e-6 && d_cyc <= 1e-6, "scalar-loop reference mismatch");

  const ImageMap half = [](const Tensor& x) { return Tensor::zeros(1, x.height, x.width); };
  const double a = adversarial_loss_ori(half, ori, fake_ori), b = adversarial_loss_photo(half, photo, fake_photo);
  out.require(std::abs(a - (-1.3863)) < 5e-5 && std::abs(b - (-1.3863)) < 5e-5, "constant discriminator value");

  const ImageMap id = [](const Tensor& x) { return x; };
  const double cyc_id = cycle_consistency_loss(TranslatorFunctions{id, id, half, half}, ori, photo);
  out.require(cyc_id == 0.0, "identity cycle loss not exactly 0");
  out.detail << "max |diff| " << std::max({d_ori, d_photo, d_cyc}) << ", constant-D " << a << "/" << b
             << ", identity cycle " << cyc_id;
}

void loss_composition(Outcome& out) {
  const auto d = testing::toy_domains(8, 16, 3);
  double worst = 0;
  int reports = 0;
  for (double lambda_adv : {1.0, 0.5})
    for (double lambda_cyc : {10.0, 3.0}) {
      TrainConfig c;
      c.image_size = 16;
      c.iterations = 20;
      c.lambda_adv = lambda_adv;
      c.lambda_cyc = lambda_cyc;
      c.generator = {8, 1};
      c.discriminator = {8, 2};
      TranslatorPair pair = TranslatorPair::create(c);
      const TrainResult r = train_on_tensors(pair, d.shapes, d.inverted_shapes, c, std::nullopt);
      std::vector<LossReport> all = r.losses;
      all.push_back(total_loss(pair, Batches{d.shapes, d.inverted_shapes}, c));
      for (const auto& l : all) {
        worst = std::max(worst, std::abs(l.total - (l.adv_ori + lambda_adv * l.adv_photo + lambda_cyc * l.cyc)));
        ++reports;
      }
    }
  out.require(worst <= 1e-6, "total differs from its weighted sum");
  out.detail << reports << " reports, max deviation " << worst;
}

void gradient_check(Outcome& out) {
  const auto t0 = std::chrono::steady_clock::now();
  TrainConfig c;
  c.image_size = 8;
  c.generator = {3, 0};
  c.discriminator = {3, 1};
  c.seed = 5;
  TranslatorPair pair = TranslatorPair::create(c);
  Rng rng(11);
  const Batches b{random_batch(rng, 2, 8), random_batch(rng, 2, 8)};
  pair.zero_grad();
  total_loss_backward(pair, b, c);

  std::vector<nn::ConvStack*> stacks{&pair.gen_photo_to_ori.stack(), &pair.gen_ori_to_photo.stack(),
                                     &pair.disc_ori.stack(), &pair.disc_photo.stack()};
  std::vector<std::pair<nn::ConvStack*, Eigen::Index>> index;
  std::vector<Eigen::VectorXd> grads;
  for (auto* s : stacks) {
    grads.push_back(s->gradients());
    for (Eigen::Index i = 0; i < s->parameter_count(); ++i) index.emplace_back(s, i);
  }
  const auto params = static_cast<std::uint64_t>(index.size());
  rng.shuffle(index.begin(), index.end());
  double worst = 0;
  for (int n = 0; n < 100; ++n) {
    auto [stack, i] = index[static_cast<std::size_t>(n)];
    const std::size_t which = static_cast<std::size_t>(std::find(stacks.begin(), stacks.end(), stack) - stacks.begin());
    Eigen::VectorXd theta = stack->parameters();
    const double h = 1e-5, keep = theta[i];
    theta[i] = keep + h;
    stack->set_parameters(theta);
    const double up = total_loss(pair, b, c).total;
    theta[i] = keep - h;
    stack->set_parameters(theta);
    const double down = total_loss(pair, b, c).total;
    theta[i] = keep;
    stack->set_parameters(theta);
    const double numeric = (up - down) / (2 * h), analytic = grads[which][i];
    const double rel = std::abs(numeric - analytic) / std::max({std::abs(numeric), std::abs(analytic), 1e-8});
    worst = std::max(worst, rel);
  }
  const double secs = seconds_since(t0);
  out.require(params < 1000, "model too large");
  out.require(worst <= 1e-4, "relative error above 1e-4");
  out.require(secs < 120, "runtime over 2 min");
  out.detail << params << " parameters, 100 sampled, max relative error " << worst << ", " << secs << " s";
}

void toy_training(Outcome& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto d = testing::toy_domains(64, 32, 7);
  TrainConfig c;
  c.image_size = 32;
  c.iterations = 500;
  TranslatorPair pair = TranslatorPair::create(c);
  const TrainResult r = train_on_tensors(pair, d.shapes, d.inverted_shapes, c, std::nullopt);
  const double first = r.losses.front().cyc, last = r.losses.back().cyc;
  const double secs = seconds_since(t0);
  out.require(r.losses.size() == 500, "did not run 500 steps");
  out.require(last <= 0.5 * first, "cycle loss above half its first value");
  out.require(secs < 600, "runtime over 10 min");
  out.detail << "cyc step 1 " << first << ", step 500 " << last << " (" << 100 * last / first << "%), " << secs << " s";
}

void refiner(Outcome& out) {
  StubDiffusionBackend stub;
  Rng rng(31);
  int wins = 0;
  double margin = 1e9;
  bool exact = true, self = true;
  for (int i = 0; i < 20; ++i) {
    const ImageD content = testing::toy_shape(rng, 32);
    ImageD reference = content;
    for (std::size_t ch = 0; ch < 3; ++ch)
      reference.planes[ch] = (box_blur(reference.planes[ch], 1) * 0.8 + 0.1 * static_cast<double>(ch)).min(1.0);
    exact = exact && refine_image({content, reference, {}, {}}, {50, 0.0, 1}, stub) == reference;
    self = self && structure_score(content, content) == 1.0;

    const ImageD refined = refine_image({content, reference, {}, {}}, {50, 0.6, static_cast<std::uint64_t>(i)}, stub);
    ImageD noise = ImageD::zeros(3, 32, 32);
    for (auto& p : noise.planes)
      for (Eigen::Index j = 0; j < p.size(); ++j) p.data()[j] = rng.uniform();
    const double a = structure_score(refined, content), b = structure_score(noise, content);
    wins += a > b;
    margin = std::min(margin, a - b);
  }
  out.require(exact, "strength 0 output differs from the reference");
  out.require(self, "structure_score(a,a) != 1");
  out.require(wins == 20, "noise baseline not beaten on every case");
  out.detail << wins << "/20 cases beat noise, smallest margin " << margin;
}

void depth_export(Outcome& out) {
  testing::TempDir dir("accept-depth");
  Rng rng(41);
  double worst = 0;
  bool idempotent = true, ordered = true, watertight = true;
  int meshes = 0;
  for (int i = 0; i < 20; ++i) {
    const int h = 2 + static_cast<int>(rng.below(31)), w = 2 + static_cast<int>(rng.below(31));
    DepthMap m;
    m.values = PlaneD(h, w);
    for (Eigen::Index j = 0; j < m.values.size(); ++j) m.values.data()[j] = rng.uniform(-10, 10);
    const DepthMap n = normalize_depth(m);
    idempotent = idempotent && (normalize_depth(n).values == n.values).all();
    for (Eigen::Index a = 0; a < m.values.size(); ++a)
      for (Eigen::Index b = 0; b < m.values.size(); ++b)
        if (m.values.data()[a] < m.values.data()[b] && !(n.values.data()[a] < n.values.data()[b])) ordered = false;
    export_depth_png16(n, dir / "d.png");
    worst = std::max(worst, (import_depth_png16(dir / "d.png").values - n.values).abs().maxCoeff());
    const ReliefMesh mesh = depth_to_relief_mesh(n, 0.2, 8, 2);
    watertight = watertight && is_watertight(mesh) && oracle::edges_paired(mesh.triangles);
    ++meshes;
  }
  DepthMap flat;
  flat.values = PlaneD::Constant(2, 2, 1.0);
  flat.normalized = true;
  const ReliefMesh box = depth_to_relief_mesh(flat, 1, 10, 2);
  std::set<std::array<double, 3>> got, want;
  for (Eigen::Index i = 0; i < box.vertices.rows(); ++i) got.insert({box.vertices(i, 0), box.vertices(i, 1), box.vertices(i, 2)});
  for (double x : {0.0, 1.0})
    for (double y : {0.0, 1.0})
      for (double z : {0.0, 12.0}) want.insert({x, y, z});
  const bool box_ok = got == want && box.vertices.rows() == 8 && box.triangles.rows() == 12 &&
                      is_watertight(box) && oracle::edges_paired(box.triangles);
  watertight = watertight && is_watertight(box);

  out.require(worst <= 1.0 / 65535, "round trip error above 1/65535");
  out.require(idempotent, "normalize not idempotent");
  out.require(ordered, "normalize changed pixel order");
  out.require(watertight, "a mesh is not watertight");
  out.require(box_ok, "2x2 box differs from the hand-built box");
  out.detail << "20 maps, max round-trip error " << worst * 65535 << "/65535, " << meshes + 1 << " meshes watertight";
}

void pipeline_resume(Outcome& out) {
  testing::TempDir dir("accept-resume");
  const PipelineConfig c = testing::pipeline_fixture(dir.path());
  const RunRecord first = run_full(c);
  out.require(first.complete(), "initial run incomplete");
  const std::string victim = first.items[2].painting_id;

  // Refined image deleted: refine must run again for that item; nothing upstream or elsewhere may.
  fs::remove(c.output_root / "items" / victim / "real_scene.png");
  const RunRecord second = run_full(c);
  const std::set<std::string> downstream{"refine", "depth", "mesh"};
  bool only_downstream = second.executions("match") == 0 && second.executions("train") == 0 &&
                         second.executions("translate") == 0;
  for (const auto& item : second.items) {
    if (item.painting_id != victim) only_downstream = only_downstream && item.executed.empty();
    for (const auto& stage : item.executed) only_downstream = only_downstream && downstream.count(stage);
  }
  const auto& ran = second.item(victim)->executed;
  out.require(std::find(ran.begin(), ran.end(), "refine") != ran.end(), "deleted stage was not recomputed");
  out.require(only_downstream, "stages outside the deleted item's downstream ran");
  out.require(fs::exists(c.output_root / "items" / victim / "real_scene.png"), "artifact not restored");

  // Depth map deleted: exactly one stage execution.
  fs::remove(c.output_root / "items" / victim / "depth.png");
  const RunRecord third = run_full(c);
  int total = 0;
  for (const auto& [stage, n] : third.stage_executions) total += n;
  out.require(total == 1 && third.executions("depth") == 1, "deleting a depth map reran more than its stage");

  std::string stages;
  for (const auto& s : ran) stages += (stages.empty() ? "" : ",") + s;
  out.detail << "after deleting real_scene.png: " << stages << " for 1 of " << second.items.size()
             << " items; after deleting depth.png: " << total << " execution";
}

void table1(Outcome& out) {
  testing::TempDir dir("accept-table");
  const StudyDefinition s = create_study(testing::study_run(dir.path(), 5), 5, 0);
  const int correct[] = {90, 100, 93, 95, 90};
  const int fives[] = {30, 30, 10, 20, 20};  // 100 ratings of 4 or 5: mean 4 + fives/100
  std::vector<StudyResponse> log;
  for (int p = 0; p < 100; ++p)
    for (int i = 0; i < 5; ++i) {
      const auto& set = s.sets[static_cast<std::size_t>(i)];
      StudyResponse a;
      a.session_id = "participant" + std::to_string(p);
      a.question_index = i + 1;
      a.kind = QuestionKind::Qs;
      a.qs_choice = set.correct_id;
      if (p >= correct[i])
        for (const auto& cand : set.candidates)
          if (cand != set.correct_id) a.qs_choice = cand;
      StudyResponse b = a;
      b.kind = QuestionKind::Qq;
      b.qq_rating = p < fives[i] ? 5 : 4;
      log.push_back(a);
      log.push_back(b);
    }
  const StudyAggregate agg = aggregate_responses(s, log);
  const double want_qs[] = {90, 100, 93, 95, 90}, want_qq[] = {4.3, 4.3, 4.1, 4.2, 4.2};
  bool per_question = true;
  for (int i = 0; i < 5; ++i)
    per_question = per_question && agg.questions[static_cast<std::size_t>(i)].qs_percent == want_qs[i] &&
                   agg.questions[static_cast<std::size_t>(i)].qq_mean == want_qq[i];
  out.require(per_question, "per-question values not as engineered");
  out.require(agg.qs_avg == 93.6, "qs_avg != 93.6");
  out.require(agg.qq_avg == 4.22, "qq_avg != 4.22");
  char buf[96];
  std::snprintf(buf, sizeof buf, "qs_avg %.17g, qq_avg %.17g", agg.qs_avg, agg.qq_avg);
  out.detail << buf;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria{
      {"matching oracle equivalence", matching},
      {"loss oracles", loss_oracles},
      {"loss composition", loss_composition},
      {"gradient check", gradient_check},
      {"toy training convergence", toy_training},
      {"refiner properties", refiner},
      {"depth export", depth_export},
      {"pipeline resume", pipeline_resume},
      {"study table arithmetic", table1},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome outcome;
    try {
      criteria[i].second(outcome);
    } catch (const std::exception& e) {
      outcome.pass = false;
      outcome.detail << "exception: " << e.what();
    }
    failed += !outcome.pass;
    std::cout << (outcome.pass ? "PASS" : "FAIL") << "  [" << i + 1 << "] " << criteria[i].first << ": "
              << outcome.detail.str() << std::endl;
  }
  std::cout << criteria.size() - static_cast<std::size_t>(failed) << "/" << criteria.size() << " criteria passed\n";
  return failed == 0 ? 0 : 1;
}
