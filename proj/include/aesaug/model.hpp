#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "aesaug/corpus.hpp"
#include "aesaug/textprep.hpp"

namespace aesaug {

enum class CellType { kGru, kLstm };
enum class EmbeddingMode { kFineTune, kFrozen };

std::string_view to_string(CellType type);
CellType parse_cell_type(std::string_view name);

struct ModelConfig {
  CellType cell_type = CellType::kGru;
  int cell_size = 300;
  int embed_dim = 100;
  std::size_t vocab_size = 0;
  bool use_content_features = false;
  int content_dim = 3;           // length of the content feature vector when enabled
  double pooling_divisor = 1.0;  // average essay length of the prompt's training essays
  int max_seq_len = 500;
  EmbeddingMode embedding_mode = EmbeddingMode::kFineTune;
  std::uint64_t seed = 1;
  double init_scale = 0.05;

  int gate_count() const { return cell_type == CellType::kGru ? 3 : 4; }
  int feature_dim() const { return cell_size + (use_content_features ? content_dim : 0); }
  void validate() const;
};

// Gate blocks are stacked row-wise: GRU (update z, reset r, candidate n),
// LSTM (input i, forget f, output o, candidate g).
struct Parameters {
  Eigen::MatrixXd embedding;          // vocab_size x embed_dim
  Eigen::MatrixXd input_weights;      // gates*cell x embed_dim
  Eigen::MatrixXd recurrent_weights;  // gates*cell x cell
  Eigen::VectorXd bias;               // gates*cell
  Eigen::VectorXd output_weights;     // cell (+ content features)
  Eigen::VectorXd output_bias;        // size 1

  static Parameters zeros_like(const ModelConfig& config);

  std::vector<std::pair<std::string_view, std::span<double>>> tensors();
  std::vector<std::pair<std::string_view, std::span<const double>>> tensors() const;
  std::size_t parameter_count() const;
};

using Gradients = Parameters;

/// Uniform(-init_scale, init_scale) weights, zero biases, seeded from
/// config.seed. Pretrained rows replace the embedding table; otherwise the
/// padding and unknown rows are zero and the rest uniform.
Parameters init_parameters(const ModelConfig& config,
                           const EmbeddingMatrix* pretrained = nullptr);

struct Example {
  std::vector<std::size_t> tokens;
  std::vector<double> content;  // content features, empty when unused
  double target = 0.0;          // normalized score
};

/// Sum over time of the masked hidden states divided by pooling_divisor, one
/// column per example. Sequences are truncated to max_seq_len.
Eigen::MatrixXd pooled_states(std::span<const Example* const> batch, const Parameters& params,
                              const ModelConfig& config);

/// Normalized scores in (0, 1) for a padded batch.
std::vector<double> forward_batch(std::span<const Example* const> batch,
                                  const Parameters& params, const ModelConfig& config);

double forward(std::span<const std::size_t> tokens, const Parameters& params,
               const ModelConfig& config, std::span<const double> content = {});

/// (pred - target)^2
double loss(double predicted, double target);

struct LossAndGradients {
  double loss = 0.0;  // mean over the batch
  Gradients gradients;
};

/// Exact gradients of the mean squared error by backpropagation through time.
LossAndGradients backward(std::span<const Example* const> batch, const Parameters& params,
                          const ModelConfig& config);

struct AdamHyper {
  double learning_rate = 0.001;
  double epsilon = 1e-7;
  double beta1 = 0.9;
  double beta2 = 0.999;
};

struct AdamState {
  Parameters first_moment;
  Parameters second_moment;
  long step = 0;

  static AdamState zeros_like(const ModelConfig& config);
};

/// One bias-corrected Adam update. Frozen embeddings are left untouched.
void adam_step(Parameters& params, const Gradients& gradients, AdamState& state,
               const AdamHyper& hyper, const ModelConfig& config);

/// (s - min) / (max - min)
double normalize_score(int score, const PromptSpec& spec);
/// Rounds half away from zero, then clamps to the prompt range.
int denormalize_score(double normalized, const PromptSpec& spec);

/// Shuffled, length-bucketed batches of example indices.
std::vector<std::vector<std::size_t>> make_batches(std::span<const Example> examples,
                                                   std::size_t batch_size, std::mt19937_64& rng);

/// One pass over `examples`; returns the mean batch loss.
double train_epoch(std::span<const Example> examples, Parameters& params, AdamState& state,
                   const ModelConfig& config, const AdamHyper& hyper, std::size_t batch_size,
                   std::mt19937_64& rng);

std::vector<double> predict(std::span<const Example> examples, const Parameters& params,
                            const ModelConfig& config, std::size_t batch_size = 64);

}  // namespace aesaug
