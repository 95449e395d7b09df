#include "aesaug/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "aesaug/error.hpp"

namespace aesaug {

namespace {

using Mat = Eigen::MatrixXd;

Mat sigmoid(const Mat& x) { return (1.0 / (1.0 + (-x.array()).exp())).matrix(); }
Mat tanh_of(const Mat& x) { return x.array().tanh().matrix(); }

struct StepCache {
  Mat x;       // embed x batch
  Mat h_prev;  // cell x batch
  Mat c_prev;  // LSTM only
  Mat gates;   // activated gates, gates*cell x batch
  Mat rh;      // GRU: r .* h_prev
  Mat tanh_c;  // LSTM: tanh(c_t)
  std::vector<bool> active;
};

struct ForwardPass {
  std::vector<StepCache> steps;
  Mat pooled;    // cell x batch
  Mat features;  // feature_dim x batch
  Eigen::RowVectorXd outputs;
};

std::size_t effective_length(const Example& e, const ModelConfig& config) {
  return std::min(e.tokens.size(), static_cast<std::size_t>(config.max_seq_len));
}

void validate_batch(std::span<const Example* const> batch, const ModelConfig& config) {
  if (batch.empty()) throw Error("model.batch", "empty batch");
  for (const auto* e : batch) {
    if (effective_length(*e, config) == 0) throw Error("model.sequence", "empty token sequence");
    for (auto t : e->tokens) {
      if (t >= config.vocab_size) {
        throw Error("model.token", "token index " + std::to_string(t) +
                                       " outside embedding table of " +
                                       std::to_string(config.vocab_size) + " rows");
      }
    }
    if (config.use_content_features &&
        e->content.size() != static_cast<std::size_t>(config.content_dim)) {
      throw Error("model.content", "expected " + std::to_string(config.content_dim) +
                                       " content features, got " +
                                       std::to_string(e->content.size()));
    }
  }
}

ForwardPass run_forward(std::span<const Example* const> batch, const Parameters& p,
                        const ModelConfig& config, bool keep_steps) {
  validate_batch(batch, config);
  const auto B = static_cast<Eigen::Index>(batch.size());
  const Eigen::Index H = config.cell_size;
  const Eigen::Index D = config.embed_dim;

  std::size_t T = 0;
  for (const auto* e : batch) T = std::max(T, effective_length(*e, config));

  ForwardPass pass;
  Mat h = Mat::Zero(H, B);
  Mat c = Mat::Zero(H, B);
  Mat sum = Mat::Zero(H, B);
  if (keep_steps) pass.steps.reserve(T);

  for (std::size_t t = 0; t < T; ++t) {
    StepCache step;
    step.x = Mat::Zero(D, B);
    step.active.assign(batch.size(), false);
    for (Eigen::Index b = 0; b < B; ++b) {
      const auto& e = *batch[static_cast<std::size_t>(b)];
      if (t < effective_length(e, config)) {
        step.x.col(b) = p.embedding.row(static_cast<Eigen::Index>(e.tokens[t])).transpose();
        step.active[static_cast<std::size_t>(b)] = true;
      }
    }

    const Mat pre = (p.input_weights * step.x).colwise() + p.bias;
    Mat h_new, c_new;
    if (config.cell_type == CellType::kGru) {
      const Mat zr_rec = p.recurrent_weights.topRows(2 * H) * h;
      const Mat z = sigmoid(pre.topRows(H) + zr_rec.topRows(H));
      const Mat r = sigmoid(pre.middleRows(H, H) + zr_rec.bottomRows(H));
      const Mat rh = (r.array() * h.array()).matrix();
      const Mat n = tanh_of(pre.bottomRows(H) + p.recurrent_weights.bottomRows(H) * rh);
      h_new = (z.array() * h.array() + (1.0 - z.array()) * n.array()).matrix();
      if (keep_steps) {
        step.gates.resize(3 * H, B);
        step.gates << z, r, n;
        step.rh = rh;
      }
    } else {
      const Mat a = pre + p.recurrent_weights * h;
      const Mat i = sigmoid(a.topRows(H));
      const Mat f = sigmoid(a.middleRows(H, H));
      const Mat o = sigmoid(a.middleRows(2 * H, H));
      const Mat g = tanh_of(a.bottomRows(H));
      c_new = (f.array() * c.array() + i.array() * g.array()).matrix();
      const Mat tc = tanh_of(c_new);
      h_new = (o.array() * tc.array()).matrix();
      if (keep_steps) {
        step.gates.resize(4 * H, B);
        step.gates << i, f, o, g;
        step.tanh_c = tc;
        step.c_prev = c;
      }
    }

    // Finished sequences carry their state forward and add nothing to the sum.
    for (Eigen::Index b = 0; b < B; ++b) {
      if (!step.active[static_cast<std::size_t>(b)]) {
        h_new.col(b) = h.col(b);
        if (config.cell_type == CellType::kLstm) c_new.col(b) = c.col(b);
      } else {
        sum.col(b) += h_new.col(b);
      }
    }
    if (keep_steps) {
      step.h_prev = std::move(h);
      pass.steps.push_back(std::move(step));
    }
    h = std::move(h_new);
    if (config.cell_type == CellType::kLstm) c = std::move(c_new);
  }

  pass.pooled = sum / config.pooling_divisor;
  const Eigen::Index F = config.feature_dim();
  pass.features.resize(F, B);
  pass.features.topRows(H) = pass.pooled;
  if (config.use_content_features) {
    for (Eigen::Index b = 0; b < B; ++b) {
      const auto& content = batch[static_cast<std::size_t>(b)]->content;
      for (Eigen::Index k = 0; k < config.content_dim; ++k) {
        pass.features(H + k, b) = content[static_cast<std::size_t>(k)];
      }
    }
  }
  const Eigen::RowVectorXd logits =
      (p.output_weights.transpose() * pass.features).array() + p.output_bias(0);
  pass.outputs = (1.0 / (1.0 + (-logits.array()).exp())).matrix();
  return pass;
}

void check_finite(const Parameters& g) {
  for (const auto& [name, values] : g.tensors()) {
    for (double v : values) {
      if (!std::isfinite(v)) {
        throw Error("model.non_finite", "non-finite gradient in " + std::string(name));
      }
    }
  }
}

}  // namespace

std::string_view to_string(CellType type) { return type == CellType::kGru ? "gru" : "lstm"; }

CellType parse_cell_type(std::string_view name) {
  if (name == "gru" || name == "GRU") return CellType::kGru;
  if (name == "lstm" || name == "LSTM") return CellType::kLstm;
  throw Error("model.config", "unknown cell type '" + std::string(name) + "'");
}

void ModelConfig::validate() const {
  if (cell_size <= 0 || embed_dim <= 0) {
    throw Error("model.config", "cell_size and embed_dim must be positive");
  }
  if (vocab_size < 2) throw Error("model.config", "vocabulary must include the special tokens");
  if (!(pooling_divisor > 0.0)) throw Error("model.config", "pooling_divisor must be positive");
  if (max_seq_len <= 0) throw Error("model.config", "max_seq_len must be positive");
  if (use_content_features && content_dim <= 0) {
    throw Error("model.config", "content_dim must be positive when content features are used");
  }
}

Parameters Parameters::zeros_like(const ModelConfig& config) {
  const Eigen::Index G = config.gate_count() * config.cell_size;
  Parameters p;
  p.embedding = Mat::Zero(static_cast<Eigen::Index>(config.vocab_size), config.embed_dim);
  p.input_weights = Mat::Zero(G, config.embed_dim);
  p.recurrent_weights = Mat::Zero(G, config.cell_size);
  p.bias = Eigen::VectorXd::Zero(G);
  p.output_weights = Eigen::VectorXd::Zero(config.feature_dim());
  p.output_bias = Eigen::VectorXd::Zero(1);
  return p;
}

std::vector<std::pair<std::string_view, std::span<double>>> Parameters::tensors() {
  auto span_of = [](auto& m) { return std::span<double>(m.data(), static_cast<std::size_t>(m.size())); };
  return {{"embedding", span_of(embedding)},
          {"input_weights", span_of(input_weights)},
          {"recurrent_weights", span_of(recurrent_weights)},
          {"bias", span_of(bias)},
          {"output_weights", span_of(output_weights)},
          {"output_bias", span_of(output_bias)}};
}

std::vector<std::pair<std::string_view, std::span<const double>>> Parameters::tensors() const {
  std::vector<std::pair<std::string_view, std::span<const double>>> out;
  for (auto [name, values] : const_cast<Parameters*>(this)->tensors()) out.emplace_back(name, values);
  return out;
}

std::size_t Parameters::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [_, values] : tensors()) n += values.size();
  return n;
}

Parameters init_parameters(const ModelConfig& config, const EmbeddingMatrix* pretrained) {
  config.validate();
  Parameters p = Parameters::zeros_like(config);
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> uniform(-config.init_scale, config.init_scale);
  auto fill = [&](auto& m) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = uniform(rng);
    }
  };
  if (pretrained) {
    if (pretrained->values.rows() != p.embedding.rows() ||
        pretrained->values.cols() != p.embedding.cols()) {
      throw Error("model.config", "pretrained embeddings do not match vocab_size x embed_dim");
    }
    p.embedding = pretrained->values;
  } else {
    fill(p.embedding);
    p.embedding.row(static_cast<Eigen::Index>(Vocabulary::kPad)).setZero();
    p.embedding.row(static_cast<Eigen::Index>(Vocabulary::kUnk)).setZero();
  }
  fill(p.input_weights);
  fill(p.recurrent_weights);
  fill(p.output_weights);
  return p;
}

Eigen::MatrixXd pooled_states(std::span<const Example* const> batch, const Parameters& params,
                              const ModelConfig& config) {
  return run_forward(batch, params, config, false).pooled;
}

std::vector<double> forward_batch(std::span<const Example* const> batch,
                                  const Parameters& params, const ModelConfig& config) {
  const auto pass = run_forward(batch, params, config, false);
  return {pass.outputs.data(), pass.outputs.data() + pass.outputs.size()};
}

double forward(std::span<const std::size_t> tokens, const Parameters& params,
               const ModelConfig& config, std::span<const double> content) {
  Example e{{tokens.begin(), tokens.end()}, {content.begin(), content.end()}, 0.0};
  const Example* batch[] = {&e};
  return forward_batch(batch, params, config).front();
}

double loss(double predicted, double target) {
  const double d = predicted - target;
  return d * d;
}

LossAndGradients backward(std::span<const Example* const> batch, const Parameters& p,
                          const ModelConfig& config) {
  const auto pass = run_forward(batch, p, config, true);
  const auto B = static_cast<Eigen::Index>(batch.size());
  const Eigen::Index H = config.cell_size;
  const bool gru = config.cell_type == CellType::kGru;

  LossAndGradients out;
  out.gradients = Parameters::zeros_like(config);
  auto& g = out.gradients;

  // d(mean loss)/d(logit) per example
  Eigen::RowVectorXd dlogit(B);
  double total = 0.0;
  for (Eigen::Index b = 0; b < B; ++b) {
    const double y = pass.outputs(b);
    const double t = batch[static_cast<std::size_t>(b)]->target;
    total += loss(y, t);
    dlogit(b) = 2.0 * (y - t) / static_cast<double>(B) * y * (1.0 - y);
  }
  out.loss = total / static_cast<double>(B);
  if (!std::isfinite(out.loss)) throw Error("model.non_finite", "non-finite loss");

  g.output_weights = pass.features * dlogit.transpose();
  g.output_bias(0) = dlogit.sum();
  const Mat dpooled = p.output_weights.head(H) * dlogit / config.pooling_divisor;

  Mat dh = Mat::Zero(H, B);  // gradient flowing into h_t from later steps
  Mat dc = Mat::Zero(H, B);
  const bool update_embedding = config.embedding_mode == EmbeddingMode::kFineTune;

  for (std::size_t t = pass.steps.size(); t-- > 0;) {
    const auto& s = pass.steps[t];
    Mat dh_step = dh + dpooled;
    Mat dc_step = dc;
    Mat dh_skip = Mat::Zero(H, B);
    Mat dc_skip = Mat::Zero(H, B);
    for (Eigen::Index b = 0; b < B; ++b) {
      if (!s.active[static_cast<std::size_t>(b)]) {
        // h_t = h_{t-1}: gradient bypasses the cell.
        dh_skip.col(b) = dh.col(b);
        dc_skip.col(b) = dc.col(b);
        dh_step.col(b).setZero();
        dc_step.col(b).setZero();
      }
    }

    Mat da(config.gate_count() * H, B);
    Mat dh_prev, dc_prev;
    if (gru) {
      const auto z = s.gates.topRows(H).array();
      const auto r = s.gates.middleRows(H, H).array();
      const auto n = s.gates.bottomRows(H).array();
      const auto hp = s.h_prev.array();
      const auto dha = dh_step.array();

      const Mat da_n = (dha * (1.0 - z) * (1.0 - n * n)).matrix();
      const Mat da_z = (dha * (hp - n) * z * (1.0 - z)).matrix();
      const auto& u_n = p.recurrent_weights.bottomRows(H);
      const Mat drh = u_n.transpose() * da_n;
      const Mat da_r = (drh.array() * hp * r * (1.0 - r)).matrix();

      da << da_z, da_r, da_n;
      g.recurrent_weights.bottomRows(H).noalias() += da_n * s.rh.transpose();
      g.recurrent_weights.topRows(2 * H).noalias() += da.topRows(2 * H) * s.h_prev.transpose();
      dh_prev = (dha * z + drh.array() * r).matrix();
      dh_prev.noalias() += p.recurrent_weights.topRows(2 * H).transpose() * da.topRows(2 * H);
    } else {
      const auto i = s.gates.topRows(H).array();
      const auto f = s.gates.middleRows(H, H).array();
      const auto o = s.gates.middleRows(2 * H, H).array();
      const auto gg = s.gates.bottomRows(H).array();
      const auto tc = s.tanh_c.array();

      const Mat dct = (dc_step.array() + dh_step.array() * o * (1.0 - tc * tc)).matrix();
      da << (dct.array() * gg * i * (1.0 - i)).matrix(),
          (dct.array() * s.c_prev.array() * f * (1.0 - f)).matrix(),
          (dh_step.array() * tc * o * (1.0 - o)).matrix(),
          (dct.array() * i * (1.0 - gg * gg)).matrix();
      g.recurrent_weights.noalias() += da * s.h_prev.transpose();
      dh_prev = p.recurrent_weights.transpose() * da;
      dc_prev = (dct.array() * f).matrix();
    }

    g.input_weights.noalias() += da * s.x.transpose();
    g.bias += da.rowwise().sum();
    if (update_embedding) {
      const Mat dx = p.input_weights.transpose() * da;
      for (Eigen::Index b = 0; b < B; ++b) {
        if (!s.active[static_cast<std::size_t>(b)]) continue;
        const auto token = batch[static_cast<std::size_t>(b)]->tokens[t];
        g.embedding.row(static_cast<Eigen::Index>(token)) += dx.col(b).transpose();
      }
    }

    dh = dh_prev + dh_skip;
    if (!gru) dc = dc_prev + dc_skip;
  }

  check_finite(g);
  return out;
}

AdamState AdamState::zeros_like(const ModelConfig& config) {
  return {Parameters::zeros_like(config), Parameters::zeros_like(config), 0};
}

void adam_step(Parameters& params, const Gradients& gradients, AdamState& state,
               const AdamHyper& hyper, const ModelConfig& config) {
  check_finite(gradients);
  ++state.step;
  const double correction1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.step));

  auto theta = params.tensors();
  const auto grad = gradients.tensors();
  auto m = state.first_moment.tensors();
  auto v = state.second_moment.tensors();
  for (std::size_t k = 0; k < theta.size(); ++k) {
    if (theta[k].first == "embedding" && config.embedding_mode == EmbeddingMode::kFrozen) {
      continue;
    }
    auto values = theta[k].second;
    const auto gk = grad[k].second;
    auto mk = m[k].second;
    auto vk = v[k].second;
    if (gk.size() != values.size()) {
      throw Error("model.shape", "gradient shape mismatch for " + std::string(theta[k].first));
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
      mk[i] = hyper.beta1 * mk[i] + (1.0 - hyper.beta1) * gk[i];
      vk[i] = hyper.beta2 * vk[i] + (1.0 - hyper.beta2) * gk[i] * gk[i];
      const double m_hat = mk[i] / correction1;
      const double v_hat = vk[i] / correction2;
      values[i] -= hyper.learning_rate * m_hat / (std::sqrt(v_hat) + hyper.epsilon);
    }
  }
}

double normalize_score(int score, const PromptSpec& spec) {
  if (!spec.contains(score)) {
    throw Error("model.range", "score " + std::to_string(score) + " outside prompt " +
                                   std::to_string(spec.prompt_id) + " range");
  }
  return static_cast<double>(score - spec.min_score) / static_cast<double>(spec.width());
}

int denormalize_score(double normalized, const PromptSpec& spec) {
  if (!(normalized >= 0.0 && normalized <= 1.0)) {
    throw Error("model.range", "normalized score " + std::to_string(normalized) +
                                   " outside [0, 1]");
  }
  const auto s = static_cast<int>(std::round(normalized * spec.width() + spec.min_score));
  return std::clamp(s, spec.min_score, spec.max_score);
}

std::vector<std::vector<std::size_t>> make_batches(std::span<const Example> examples,
                                                   std::size_t batch_size, std::mt19937_64& rng) {
  if (batch_size == 0) throw Error("model.batch", "batch size must be positive");
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);

  // Sort by length inside windows of a few batches so padding stays small
  // while batch composition still varies between epochs.
  const std::size_t window = batch_size * 8;
  for (std::size_t start = 0; start < order.size(); start += window) {
    const auto end = std::min(order.size(), start + window);
    std::stable_sort(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(end),
                     [&](std::size_t a, std::size_t b) {
                       return examples[a].tokens.size() < examples[b].tokens.size();
                     });
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const auto end = std::min(order.size(), start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  std::shuffle(batches.begin(), batches.end(), rng);
  return batches;
}

double train_epoch(std::span<const Example> examples, Parameters& params, AdamState& state,
                   const ModelConfig& config, const AdamHyper& hyper, std::size_t batch_size,
                   std::mt19937_64& rng) {
  const auto batches = make_batches(examples, batch_size, rng);
  double total = 0.0;
  std::vector<const Example*> batch;
  for (const auto& indices : batches) {
    batch.clear();
    for (auto i : indices) batch.push_back(&examples[i]);
    auto result = backward(batch, params, config);
    adam_step(params, result.gradients, state, hyper, config);
    total += result.loss;
  }
  return batches.empty() ? 0.0 : total / static_cast<double>(batches.size());
}

std::vector<double> predict(std::span<const Example> examples, const Parameters& params,
                            const ModelConfig& config, std::size_t batch_size) {
  std::vector<double> out;
  out.reserve(examples.size());
  std::vector<const Example*> batch;
  for (std::size_t start = 0; start < examples.size(); start += batch_size) {
    batch.clear();
    for (std::size_t i = start; i < std::min(examples.size(), start + batch_size); ++i) {
      batch.push_back(&examples[i]);
    }
    const auto scores = forward_batch(batch, params, config);
    out.insert(out.end(), scores.begin(), scores.end());
  }
  return out;
}

}  // namespace aesaug
