#pragma once

#include "p2d/corpus.hpp"
#include "p2d/nn.hpp"
#include "p2d/rng.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace p2d {

using nn::Tensor;

/// Any image-to-image (generator) or image-to-logit-map (discriminator) function.
using ImageMap = std::function<Tensor(const Tensor&)>;

enum class AdversarialForm { Log, LeastSquares };

struct TrainConfig {
  double lambda_adv = 1.0;
  double lambda_cyc = 10.0;
  double learning_rate = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  int batch_size = 1;
  int iterations = 1000;
  int image_size = 256;
  std::uint64_t seed = 0;
  int checkpoint_every = 100;
  nn::GeneratorSpec generator;
  nn::DiscriminatorSpec discriminator;
  double init_gain = 1.0;
  bool identity_init = false;
  AdversarialForm adversarial = AdversarialForm::Log;

  /// Throws InvalidConfig.
  void validate() const;
  std::string to_json() const;
  static TrainConfig from_json(const std::string& text);
};

/// total = adv_ori + lambda_adv * adv_photo + lambda_cyc * cyc
struct LossReport {
  double adv_ori = 0.0;
  double adv_photo = 0.0;
  double cyc = 0.0;
  double total = 0.0;
  long step = 0;
};

LossReport make_loss_report(double adv_ori, double adv_photo, double cyc, const TrainConfig& config, long step);

struct TranslatorFunctions {
  ImageMap gen_photo_to_ori;
  ImageMap gen_ori_to_photo;
  ImageMap disc_ori;
  ImageMap disc_photo;
};

struct TranslatorPair {
  nn::Generator gen_photo_to_ori;
  nn::Generator gen_ori_to_photo;
  nn::Discriminator disc_ori;
  nn::Discriminator disc_photo;
  long step = 0;

  static TranslatorPair create(const TrainConfig& config);
  TranslatorFunctions functions() const;
  Eigen::Index parameter_count() const;
  void zero_grad();
};

struct Batches {
  std::vector<Tensor> ori;
  std::vector<Tensor> photo;
};

/// E_real[log D(real)] + E_fake[log(1 - D(fake))], D = sigmoid of the logit map, each
/// expectation a mean over images and score-map cells. The least-squares form reports
/// -(E[(l_real - 1)^2] + E[l_fake^2]). Throws EmptyBatch / ShapeError.
double adversarial_loss(const ImageMap& disc, std::span<const Tensor> real, std::span<const Tensor> fake,
                        AdversarialForm form = AdversarialForm::Log);

inline double adversarial_loss_ori(const ImageMap& disc_ori, std::span<const Tensor> real_ori,
                                   std::span<const Tensor> fake_ori, AdversarialForm form = AdversarialForm::Log) {
  return adversarial_loss(disc_ori, real_ori, fake_ori, form);
}

inline double adversarial_loss_photo(const ImageMap& disc_photo, std::span<const Tensor> real_photo,
                                     std::span<const Tensor> fake_photo, AdversarialForm form = AdversarialForm::Log) {
  return adversarial_loss(disc_photo, real_photo, fake_photo, form);
}

/// Mean per-element L1 of the photo round trip plus that of the painting round trip.
double cycle_consistency_loss(const TranslatorFunctions& fns, std::span<const Tensor> ori,
                              std::span<const Tensor> photo);
double cycle_consistency_loss(const TranslatorPair& pair, std::span<const Tensor> ori, std::span<const Tensor> photo);

LossReport total_loss(const TranslatorFunctions& fns, const Batches& batches, const TrainConfig& config);
LossReport total_loss(const TranslatorPair& pair, const Batches& batches, const TrainConfig& config);

/// Evaluates total_loss and accumulates d(total)/d(theta) into every network's gradient buffers.
LossReport total_loss_backward(TranslatorPair& pair, const Batches& batches, const TrainConfig& config);

/// One optimisation step per call: generators descend, then discriminators ascend the
/// adversarial terms on fakes from the updated generators. Batches are drawn from
/// seeded per-domain permutations.
class Trainer {
 public:
  Trainer(TranslatorPair& pair, TrainConfig config, std::vector<Tensor> ori, std::vector<Tensor> photo);

  /// Returns the loss evaluated before this step's updates. Throws DivergedTraining.
  LossReport step();

 private:
  std::vector<Tensor> next_batch(const std::vector<Tensor>& pool, std::vector<std::size_t>& order,
                                 std::size_t& cursor);

  TranslatorPair& pair_;
  TrainConfig config_;
  std::vector<Tensor> ori_;
  std::vector<Tensor> photo_;
  Rng rng_;
  std::vector<std::size_t> ori_order_, photo_order_;
  std::size_t ori_cursor_ = 0, photo_cursor_ = 0;
  nn::Adam opt_g_p2o_, opt_g_o2p_, opt_d_ori_, opt_d_photo_;
};

struct CheckpointProvenance {
  std::string manifest_hash;
  std::string dictionary_hash;
};

/// Writes run_dir/{step}/{gen_p2o,gen_o2p,disc_ori,disc_photo,meta.json}.
std::filesystem::path save_checkpoint(const TranslatorPair& pair, const TrainConfig& config,
                                      const std::filesystem::path& run_dir, const CheckpointProvenance& provenance);

struct LoadedCheckpoint {
  TranslatorPair pair;
  TrainConfig config;
  std::filesystem::path directory;
};

/// Latest step when `step` is empty. Throws NoCheckpoint.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& run_dir, std::optional<long> step = std::nullopt);

struct TrainResult {
  std::vector<LossReport> losses;
  std::filesystem::path last_checkpoint;
};

/// Trains on in-memory tensors. With a run_dir, writes the initial checkpoint, one every
/// checkpoint_every steps, the final one, and appends losses.csv.
TrainResult train_on_tensors(TranslatorPair& pair, std::vector<Tensor> ori, std::vector<Tensor> photo,
                             const TrainConfig& config, const std::optional<std::filesystem::path>& run_dir,
                             const CheckpointProvenance& provenance = {});

/// Trains on the paintings and matched photos of a matched manifest.
TrainResult train(TranslatorPair& pair, const DatasetManifest& matched, const TrainConfig& config,
                  const std::filesystem::path& run_dir, const std::string& dictionary_hash = {});

/// Loads, converts to RGB and resizes to image_size × image_size.
Tensor load_training_tensor(const std::filesystem::path& path, int image_size);

/// Painting → pseudo-real scene image, clamped to [0,1], at image_size.
ImageD translate_image(const TranslatorPair& pair, const ImageD& painting, int image_size);

/// Writes out_dir/<painting id>.pseudo_real.png and returns its record (id "<painting id>.pseudo_real").
ImageRecord translate_to_pseudo_real(const TranslatorPair& pair, const ImageRecord& painting,
                                     const std::filesystem::path& out_dir, int image_size);

}  // namespace p2d
