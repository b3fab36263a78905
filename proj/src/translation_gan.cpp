#include "p2d/translation_gan.hpp"

#include "p2d/error.hpp"
#include "p2d/hash.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace p2d {
namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Config

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::InvalidConfig, what); };
  if (!(lambda_adv >= 0.0)) fail("lambda_adv must be >= 0");
  if (!(lambda_cyc >= 0.0)) fail("lambda_cyc must be >= 0");
  if (!(learning_rate > 0.0)) fail("learning_rate must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) fail("Adam betas must lie in [0,1)");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (iterations < 0) fail("iterations must be >= 0");
  if (image_size < 8) fail("image_size must be >= 8");
  if (checkpoint_every < 1) fail("checkpoint_every must be >= 1");
  if (generator.hidden < 1 || generator.blocks < 0) fail("bad generator architecture");
  if (discriminator.hidden < 1 || discriminator.downsample < 0) fail("bad discriminator architecture");
  if (image_size >> discriminator.downsample < 1) fail("image_size too small for the discriminator");
  if (!(init_gain > 0.0)) fail("init_gain must be > 0");
}

namespace {

json config_json(const TrainConfig& c) {
  return {{"lambda_adv", c.lambda_adv},
          {"lambda_cyc", c.lambda_cyc},
          {"learning_rate", c.learning_rate},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"batch_size", c.batch_size},
          {"iterations", c.iterations},
          {"image_size", c.image_size},
          {"seed", c.seed},
          {"checkpoint_every", c.checkpoint_every},
          {"generator", {{"hidden", c.generator.hidden}, {"blocks", c.generator.blocks}}},
          {"discriminator", {{"hidden", c.discriminator.hidden}, {"downsample", c.discriminator.downsample}}},
          {"init_gain", c.init_gain},
          {"identity_init", c.identity_init},
          {"adversarial", c.adversarial == AdversarialForm::Log ? "log" : "least_squares"}};
}

TrainConfig config_from(const json& j) {
  TrainConfig c;
  c.lambda_adv = j.value("lambda_adv", c.lambda_adv);
  c.lambda_cyc = j.value("lambda_cyc", c.lambda_cyc);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.iterations = j.value("iterations", c.iterations);
  c.image_size = j.value("image_size", c.image_size);
  c.seed = j.value("seed", c.seed);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  if (j.contains("generator")) {
    c.generator.hidden = j["generator"].value("hidden", c.generator.hidden);
    c.generator.blocks = j["generator"].value("blocks", c.generator.blocks);
  }
  if (j.contains("discriminator")) {
    c.discriminator.hidden = j["discriminator"].value("hidden", c.discriminator.hidden);
    c.discriminator.downsample = j["discriminator"].value("downsample", c.discriminator.downsample);
  }
  c.init_gain = j.value("init_gain", c.init_gain);
  c.identity_init = j.value("identity_init", c.identity_init);
  const std::string form = j.value("adversarial", std::string("log"));
  if (form == "log") {
    c.adversarial = AdversarialForm::Log;
  } else if (form == "least_squares") {
    c.adversarial = AdversarialForm::LeastSquares;
  } else {
    throw Error(ErrorCode::InvalidConfig, "adversarial must be 'log' or 'least_squares'");
  }
  return c;
}

}  // namespace

std::string TrainConfig::to_json() const { return config_json(*this).dump(2); }

TrainConfig TrainConfig::from_json(const std::string& text) {
  try {
    TrainConfig c = config_from(json::parse(text));
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, e.what());
  }
}

LossReport make_loss_report(double adv_ori, double adv_photo, double cyc, const TrainConfig& config, long step) {
  return {adv_ori, adv_photo, cyc, adv_ori + config.lambda_adv * adv_photo + config.lambda_cyc * cyc, step};
}

// ---------------------------------------------------------------------------
// Pair

TranslatorPair TranslatorPair::create(const TrainConfig& config) {
  TranslatorPair pair;
  const auto seed = config.seed;
  pair.gen_photo_to_ori = nn::Generator(config.generator, seed * 4 + 1, config.identity_init, config.init_gain);
  pair.gen_ori_to_photo = nn::Generator(config.generator, seed * 4 + 2, config.identity_init, config.init_gain);
  pair.disc_ori = nn::Discriminator(config.discriminator, seed * 4 + 3, config.init_gain);
  pair.disc_photo = nn::Discriminator(config.discriminator, seed * 4 + 4, config.init_gain);
  return pair;
}

TranslatorFunctions TranslatorPair::functions() const {
  return {[this](const Tensor& x) { return gen_photo_to_ori.forward(x); },
          [this](const Tensor& x) { return gen_ori_to_photo.forward(x); },
          [this](const Tensor& x) { return disc_ori.forward(x); },
          [this](const Tensor& x) { return disc_photo.forward(x); }};
}

Eigen::Index TranslatorPair::parameter_count() const {
  return gen_photo_to_ori.stack().parameter_count() + gen_ori_to_photo.stack().parameter_count() +
         disc_ori.stack().parameter_count() + disc_photo.stack().parameter_count();
}

void TranslatorPair::zero_grad() {
  gen_photo_to_ori.stack().zero_grad();
  gen_ori_to_photo.stack().zero_grad();
  disc_ori.stack().zero_grad();
  disc_photo.stack().zero_grad();
}

// ---------------------------------------------------------------------------
// Losses

namespace {

// log(sigmoid(l)) and log(1 - sigmoid(l)) without overflow.
double log_sigmoid(double l) { return l >= 0 ? -std::log1p(std::exp(-l)) : l - std::log1p(std::exp(l)); }
double log_one_minus_sigmoid(double l) { return log_sigmoid(-l); }
double sigmoid(double l) { return l >= 0 ? 1.0 / (1.0 + std::exp(-l)) : std::exp(l) / (1.0 + std::exp(l)); }

void check_batch(std::span<const Tensor> batch, const char* what) {
  if (batch.empty()) throw Error(ErrorCode::EmptyBatch, std::string(what) + " batch is empty");
  for (const auto& t : batch)
    if (!t.same_shape(batch.front())) throw Error(ErrorCode::ShapeError, std::string(what) + " batch shapes differ");
}

void check_spatial(const Tensor& a, const Tensor& b) {
  if (a.height != b.height || a.width != b.width)
    throw Error(ErrorCode::ShapeError, "real and fake batches differ in spatial shape");
}

double real_term(const Eigen::MatrixXd& logits, AdversarialForm form) {
  if (form == AdversarialForm::Log) return logits.unaryExpr([](double l) { return log_sigmoid(l); }).mean();
  return -(logits.array() - 1.0).square().mean();
}

double fake_term(const Eigen::MatrixXd& logits, AdversarialForm form) {
  if (form == AdversarialForm::Log) return logits.unaryExpr([](double l) { return log_one_minus_sigmoid(l); }).mean();
  return -logits.array().square().mean();
}

double mean_abs_diff(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw Error(ErrorCode::ShapeError, "reconstruction shape differs from its input");
  return (a.data - b.data).cwiseAbs().mean();
}

}  // namespace

double adversarial_loss(const ImageMap& disc, std::span<const Tensor> real, std::span<const Tensor> fake,
                        AdversarialForm form) {
  check_batch(real, "real");
  check_batch(fake, "fake");
  check_spatial(real.front(), fake.front());
  double real_sum = 0.0, fake_sum = 0.0;
  for (const auto& x : real) real_sum += real_term(disc(x).data, form);
  for (const auto& x : fake) fake_sum += fake_term(disc(x).data, form);
  return real_sum / static_cast<double>(real.size()) + fake_sum / static_cast<double>(fake.size());
}

double cycle_consistency_loss(const TranslatorFunctions& fns, std::span<const Tensor> ori,
                              std::span<const Tensor> photo) {
  check_batch(ori, "painting");
  check_batch(photo, "photo");
  double photo_cycle = 0.0, ori_cycle = 0.0;
  for (const auto& p : photo) photo_cycle += mean_abs_diff(fns.gen_ori_to_photo(fns.gen_photo_to_ori(p)), p);
  for (const auto& o : ori) ori_cycle += mean_abs_diff(fns.gen_photo_to_ori(fns.gen_ori_to_photo(o)), o);
  return photo_cycle / static_cast<double>(photo.size()) + ori_cycle / static_cast<double>(ori.size());
}

double cycle_consistency_loss(const TranslatorPair& pair, std::span<const Tensor> ori, std::span<const Tensor> photo) {
  return cycle_consistency_loss(pair.functions(), ori, photo);
}

LossReport total_loss(const TranslatorFunctions& fns, const Batches& batches, const TrainConfig& config) {
  check_batch(batches.ori, "painting");
  check_batch(batches.photo, "photo");
  std::vector<Tensor> fake_ori, fake_photo;
  for (const auto& p : batches.photo) fake_ori.push_back(fns.gen_photo_to_ori(p));
  for (const auto& o : batches.ori) fake_photo.push_back(fns.gen_ori_to_photo(o));
  const double adv_ori = adversarial_loss(fns.disc_ori, batches.ori, fake_ori, config.adversarial);
  const double adv_photo = adversarial_loss(fns.disc_photo, batches.photo, fake_photo, config.adversarial);
  double cyc = 0.0, cyc_ori = 0.0;
  for (std::size_t i = 0; i < batches.photo.size(); ++i)
    cyc += mean_abs_diff(fns.gen_ori_to_photo(fake_ori[i]), batches.photo[i]);
  for (std::size_t i = 0; i < batches.ori.size(); ++i)
    cyc_ori += mean_abs_diff(fns.gen_photo_to_ori(fake_photo[i]), batches.ori[i]);
  cyc = cyc / static_cast<double>(batches.photo.size()) + cyc_ori / static_cast<double>(batches.ori.size());
  return make_loss_report(adv_ori, adv_photo, cyc, config, 0);
}

LossReport total_loss(const TranslatorPair& pair, const Batches& batches, const TrainConfig& config) {
  LossReport r = total_loss(pair.functions(), batches, config);
  r.step = pair.step;
  return r;
}

// ---------------------------------------------------------------------------
// Gradients

namespace {

enum class Pass {
  Total,          // d(total)/d(all parameters)
  Generator,      // generator objective (total, or least-squares generator form)
  Discriminator,  // d(-adversarial terms)/d(discriminator parameters), fakes detached
};

// Gradient of the per-image term w.r.t. each logit, before the 1/|batch| factor.
Eigen::MatrixXd real_logit_grad(const Eigen::MatrixXd& l, AdversarialForm form, Pass pass) {
  const double cells = static_cast<double>(l.size());
  Eigen::MatrixXd g;
  if (form == AdversarialForm::Log) {
    g = l.unaryExpr([](double v) { return 1.0 - sigmoid(v); });
  } else {
    g = -2.0 * (l.array() - 1.0).matrix();
  }
  if (pass == Pass::Discriminator) g = -g;
  return g / cells;
}

Eigen::MatrixXd fake_logit_grad(const Eigen::MatrixXd& l, AdversarialForm form, Pass pass) {
  const double cells = static_cast<double>(l.size());
  Eigen::MatrixXd g;
  if (form == AdversarialForm::Log) {
    g = l.unaryExpr([](double v) { return -sigmoid(v); });
    if (pass == Pass::Discriminator) g = -g;
  } else if (pass == Pass::Generator) {
    g = 2.0 * (l.array() - 1.0).matrix();  // generator minimises (l - 1)^2
  } else {
    g = -2.0 * l;
    if (pass == Pass::Discriminator) g = -g;
  }
  return g / cells;
}

Tensor l1_grad(const Tensor& reconstruction, const Tensor& target, double scale) {
  Tensor g{target.channels, target.height, target.width,
           (reconstruction.data - target.data).unaryExpr([](double d) { return d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0); })};
  g.data *= scale / static_cast<double>(target.data.size());
  return g;
}

// One adversarial direction: real images of the target domain, sources mapped by `gen`
// and scored by `disc`. Returns the term value; with `fake_grads` non-null, fills the
// gradient w.r.t. each fake image (weight already applied).
double adversarial_backward(nn::Discriminator& disc, const std::vector<Tensor>& real,
                            const std::vector<Tensor>& fake, double weight, AdversarialForm form, Pass pass,
                            std::vector<Tensor>* fake_grads) {
  check_spatial(real.front(), fake.front());
  double real_sum = 0.0, fake_sum = 0.0;
  const double real_scale = weight / static_cast<double>(real.size());
  const double fake_scale = weight / static_cast<double>(fake.size());
  for (const auto& x : real) {
    nn::Discriminator::Trace trace;
    const Tensor logits = disc.forward(x, &trace);
    real_sum += real_term(logits.data, form);
    if (pass == Pass::Generator) continue;  // real images do not depend on the generators
    Tensor g{logits.channels, logits.height, logits.width, real_scale * real_logit_grad(logits.data, form, pass)};
    disc.backward(trace, g);
  }
  if (fake_grads) fake_grads->clear();
  for (const auto& x : fake) {
    nn::Discriminator::Trace trace;
    const Tensor logits = disc.forward(x, &trace);
    fake_sum += fake_term(logits.data, form);
    Tensor g{logits.channels, logits.height, logits.width, fake_scale * fake_logit_grad(logits.data, form, pass)};
    Tensor gx = disc.backward(trace, g);
    if (fake_grads) fake_grads->push_back(std::move(gx));
  }
  return real_sum / static_cast<double>(real.size()) + fake_sum / static_cast<double>(fake.size());
}

LossReport evaluate(TranslatorPair& pair, const Batches& b, const TrainConfig& config, Pass pass) {
  check_batch(b.ori, "painting");
  check_batch(b.photo, "photo");
  const std::size_t np = b.photo.size(), no = b.ori.size();

  std::vector<nn::Generator::Trace> p2o_traces(np), o2p_traces(no);
  std::vector<Tensor> fake_ori(np), fake_photo(no);
  for (std::size_t i = 0; i < np; ++i) fake_ori[i] = pair.gen_photo_to_ori.forward(b.photo[i], &p2o_traces[i]);
  for (std::size_t i = 0; i < no; ++i) fake_photo[i] = pair.gen_ori_to_photo.forward(b.ori[i], &o2p_traces[i]);

  const bool backprop_generators = pass != Pass::Discriminator;
  std::vector<Tensor> d_fake_ori, d_fake_photo;
  const double adv_ori = adversarial_backward(pair.disc_ori, b.ori, fake_ori, 1.0, config.adversarial, pass,
                                              backprop_generators ? &d_fake_ori : nullptr);
  const double adv_photo = adversarial_backward(pair.disc_photo, b.photo, fake_photo, config.lambda_adv,
                                                config.adversarial, pass,
                                                backprop_generators ? &d_fake_photo : nullptr);

  double cyc_photo = 0.0, cyc_ori = 0.0;
  for (std::size_t i = 0; i < np; ++i) {
    nn::Generator::Trace trace;
    const Tensor rec = pair.gen_ori_to_photo.forward(fake_ori[i], &trace);
    cyc_photo += mean_abs_diff(rec, b.photo[i]);
    if (!backprop_generators) continue;
    const Tensor g = l1_grad(rec, b.photo[i], config.lambda_cyc / static_cast<double>(np));
    d_fake_ori[i].data += pair.gen_ori_to_photo.backward(trace, g).data;
  }
  for (std::size_t i = 0; i < no; ++i) {
    nn::Generator::Trace trace;
    const Tensor rec = pair.gen_photo_to_ori.forward(fake_photo[i], &trace);
    cyc_ori += mean_abs_diff(rec, b.ori[i]);
    if (!backprop_generators) continue;
    const Tensor g = l1_grad(rec, b.ori[i], config.lambda_cyc / static_cast<double>(no));
    d_fake_photo[i].data += pair.gen_photo_to_ori.backward(trace, g).data;
  }
  if (backprop_generators) {
    for (std::size_t i = 0; i < np; ++i) pair.gen_photo_to_ori.backward(p2o_traces[i], d_fake_ori[i]);
    for (std::size_t i = 0; i < no; ++i) pair.gen_ori_to_photo.backward(o2p_traces[i], d_fake_photo[i]);
  }
  const double cyc = cyc_photo / static_cast<double>(np) + cyc_ori / static_cast<double>(no);
  return make_loss_report(adv_ori, adv_photo, cyc, config, pair.step);
}

}  // namespace

LossReport total_loss_backward(TranslatorPair& pair, const Batches& batches, const TrainConfig& config) {
  return evaluate(pair, batches, config, Pass::Total);
}

// ---------------------------------------------------------------------------
// Training

Trainer::Trainer(TranslatorPair& pair, TrainConfig config, std::vector<Tensor> ori, std::vector<Tensor> photo)
    : pair_(pair),
      config_(std::move(config)),
      ori_(std::move(ori)),
      photo_(std::move(photo)),
      rng_(config_.seed ^ 0x9e3779b97f4a7c15ull),
      opt_g_p2o_(config_.learning_rate, config_.beta1, config_.beta2),
      opt_g_o2p_(config_.learning_rate, config_.beta1, config_.beta2),
      opt_d_ori_(config_.learning_rate, config_.beta1, config_.beta2),
      opt_d_photo_(config_.learning_rate, config_.beta1, config_.beta2) {
  config_.validate();
  if (ori_.empty() || photo_.empty()) throw Error(ErrorCode::EmptyBatch, "training needs images from both domains");
}

std::vector<Tensor> Trainer::next_batch(const std::vector<Tensor>& pool, std::vector<std::size_t>& order,
                                        std::size_t& cursor) {
  std::vector<Tensor> batch;
  for (int i = 0; i < config_.batch_size; ++i) {
    if (cursor >= order.size()) {
      order.resize(pool.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      rng_.shuffle(order.begin(), order.end());
      cursor = 0;
    }
    batch.push_back(pool[order[cursor++]]);
  }
  return batch;
}

LossReport Trainer::step() {
  Batches batch{next_batch(ori_, ori_order_, ori_cursor_), next_batch(photo_, photo_order_, photo_cursor_)};
  ++pair_.step;

  pair_.zero_grad();
  const Pass gen_pass = config_.adversarial == AdversarialForm::Log ? Pass::Total : Pass::Generator;
  LossReport report = evaluate(pair_, batch, config_, gen_pass);
  if (!std::isfinite(report.total))
    throw Error(ErrorCode::DivergedTraining, "non-finite loss at step " + std::to_string(pair_.step));

  auto apply = [](nn::ConvStack& stack, nn::Adam& opt, double sign) {
    Eigen::VectorXd params = stack.parameters();
    opt.step(params, sign * stack.gradients());
    stack.set_parameters(params);
  };
  apply(pair_.gen_photo_to_ori.stack(), opt_g_p2o_, 1.0);
  apply(pair_.gen_ori_to_photo.stack(), opt_g_o2p_, 1.0);

  pair_.zero_grad();
  evaluate(pair_, batch, config_, Pass::Discriminator);
  apply(pair_.disc_ori.stack(), opt_d_ori_, 1.0);
  apply(pair_.disc_photo.stack(), opt_d_photo_, 1.0);
  return report;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

json stack_json(const nn::ConvStack& stack) {
  const Eigen::VectorXd p = stack.parameters();
  return json(std::vector<double>(p.data(), p.data() + p.size()));
}

void load_stack(nn::ConvStack& stack, const json& values) {
  const auto v = values.get<std::vector<double>>();
  stack.set_parameters(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::NoCheckpoint, "missing " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

fs::path save_checkpoint(const TranslatorPair& pair, const TrainConfig& config, const fs::path& run_dir,
                         const CheckpointProvenance& provenance) {
  const fs::path dir = run_dir / std::to_string(pair.step);
  fs::create_directories(dir);
  write_text(dir / "gen_p2o", json{{"kind", "generator"}, {"params", stack_json(pair.gen_photo_to_ori.stack())}}.dump());
  write_text(dir / "gen_o2p", json{{"kind", "generator"}, {"params", stack_json(pair.gen_ori_to_photo.stack())}}.dump());
  write_text(dir / "disc_ori", json{{"kind", "discriminator"}, {"params", stack_json(pair.disc_ori.stack())}}.dump());
  write_text(dir / "disc_photo",
             json{{"kind", "discriminator"}, {"params", stack_json(pair.disc_photo.stack())}}.dump());
  const json meta = {{"step", pair.step},
                     {"config", config_json(config)},
                     {"manifest_hash", provenance.manifest_hash},
                     {"dictionary_hash", provenance.dictionary_hash}};
  write_text(dir / "meta.json", meta.dump(2));
  return dir;
}

LoadedCheckpoint load_checkpoint(const fs::path& run_dir, std::optional<long> step) {
  std::error_code ec;
  if (!fs::is_directory(run_dir, ec)) throw Error(ErrorCode::NoCheckpoint, run_dir.string() + " is not a directory");
  if (!step) {
    for (const auto& entry : fs::directory_iterator(run_dir)) {
      if (!entry.is_directory() || !fs::exists(entry.path() / "meta.json")) continue;
      const std::string name = entry.path().filename().string();
      if (name.empty() || !std::all_of(name.begin(), name.end(), ::isdigit)) continue;
      const long s = std::stol(name);
      if (!step || s > *step) step = s;
    }
    if (!step) throw Error(ErrorCode::NoCheckpoint, "no checkpoint under " + run_dir.string());
  }
  const fs::path dir = run_dir / std::to_string(*step);
  try {
    const json meta = json::parse(read_text(dir / "meta.json"));
    LoadedCheckpoint out;
    out.config = config_from(meta.at("config"));
    out.pair = TranslatorPair::create(out.config);
    out.pair.step = meta.at("step").get<long>();
    load_stack(out.pair.gen_photo_to_ori.stack(), json::parse(read_text(dir / "gen_p2o")).at("params"));
    load_stack(out.pair.gen_ori_to_photo.stack(), json::parse(read_text(dir / "gen_o2p")).at("params"));
    load_stack(out.pair.disc_ori.stack(), json::parse(read_text(dir / "disc_ori")).at("params"));
    load_stack(out.pair.disc_photo.stack(), json::parse(read_text(dir / "disc_photo")).at("params"));
    out.directory = dir;
    return out;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::NoCheckpoint, dir.string() + ": " + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::NoCheckpoint) throw;
    throw Error(ErrorCode::NoCheckpoint, dir.string() + ": " + e.what());
  }
}

TrainResult train_on_tensors(TranslatorPair& pair, std::vector<Tensor> ori, std::vector<Tensor> photo,
                             const TrainConfig& config, const std::optional<fs::path>& run_dir,
                             const CheckpointProvenance& provenance) {
  config.validate();
  TrainResult result;
  std::ofstream losses;
  if (run_dir) {
    fs::create_directories(*run_dir);
    result.last_checkpoint = save_checkpoint(pair, config, *run_dir, provenance);
    const fs::path csv = *run_dir / "losses.csv";
    const bool fresh = !fs::exists(csv) || fs::file_size(csv) == 0;
    losses.open(csv, std::ios::app);
    if (fresh) losses << "step,adv_ori,adv_photo,cyc,total\n";
    losses.precision(17);
  }
  if (config.iterations == 0) return result;

  Trainer trainer(pair, config, std::move(ori), std::move(photo));
  for (int i = 0; i < config.iterations; ++i) {
    LossReport r;
    try {
      r = trainer.step();
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DivergedTraining) throw;
      throw Error(ErrorCode::DivergedTraining, std::string(e.what()) + "; last good checkpoint: " +
                                                   (result.last_checkpoint.empty()
                                                        ? std::string("none")
                                                        : result.last_checkpoint.string()));
    }
    result.losses.push_back(r);
    if (run_dir) {
      losses << r.step << ',' << r.adv_ori << ',' << r.adv_photo << ',' << r.cyc << ',' << r.total << '\n';
      if (pair.step % config.checkpoint_every == 0 || i + 1 == config.iterations) {
        losses.flush();
        result.last_checkpoint = save_checkpoint(pair, config, *run_dir, provenance);
      }
    }
  }
  return result;
}

Tensor load_training_tensor(const fs::path& path, int image_size) {
  return nn::to_tensor(resize_bilinear(to_rgb(read_png(path)), image_size, image_size));
}

TrainResult train(TranslatorPair& pair, const DatasetManifest& matched, const TrainConfig& config,
                  const fs::path& run_dir, const std::string& dictionary_hash) {
  config.validate();
  std::vector<std::string> painting_ids, photo_ids;
  for (const auto& p : matched.pairs) {
    if (std::find(painting_ids.begin(), painting_ids.end(), p.painting_id) == painting_ids.end())
      painting_ids.push_back(p.painting_id);
    if (std::find(photo_ids.begin(), photo_ids.end(), p.photo_id) == photo_ids.end()) photo_ids.push_back(p.photo_id);
  }
  if (painting_ids.empty() || photo_ids.empty())
    throw Error(ErrorCode::EmptyBatch, "matched manifest has no pairs; run matching first");
  std::sort(photo_ids.begin(), photo_ids.end());
  std::vector<Tensor> ori, photo;
  for (const auto& id : painting_ids) ori.push_back(load_training_tensor(matched.find(id)->path, config.image_size));
  for (const auto& id : photo_ids) photo.push_back(load_training_tensor(matched.find(id)->path, config.image_size));
  return train_on_tensors(pair, std::move(ori), std::move(photo), config, run_dir,
                          {manifest_hash(matched), dictionary_hash});
}

ImageD translate_image(const TranslatorPair& pair, const ImageD& painting, int image_size) {
  const Tensor x = nn::to_tensor(resize_bilinear(to_rgb(painting), image_size, image_size));
  return clamp01(nn::to_image(pair.gen_ori_to_photo.forward(x)));
}

ImageRecord translate_to_pseudo_real(const TranslatorPair& pair, const ImageRecord& painting, const fs::path& out_dir,
                                     int image_size) {
  const ImageD out = translate_image(pair, read_png(painting.path), image_size);
  fs::create_directories(out_dir);
  const fs::path file = out_dir / (painting.id + ".pseudo_real.png");
  write_png(file, out);
  ImageRecord r = make_record(file, DomainTag::PseudoReal, file.filename().string());
  r.id = painting.id + ".pseudo_real";
  return r;
}

}  // namespace p2d
