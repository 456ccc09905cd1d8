#include "flexlog/train.hpp"

#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>

#include "byte_io.hpp"
#include "flexlog/parallel.hpp"

namespace flexlog {
namespace {

constexpr std::string_view kMagic = "FLXP";
constexpr std::uint16_t kVersion = 1;

std::vector<double> fit_or_keep(const std::vector<double>& values, const ModelConfig& c,
                                const std::vector<double>& previous) {
  try {
    return refit_anchors(values, c.n_anchor, c.anchor_min_separation, previous);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::DegenerateLabels) throw;
    return previous.empty() ? uniform_anchors(c.n_anchor).beta : previous;
  }
}

}  // namespace

AnchorSet fit_anchors(const std::vector<RegionSample>& samples, const ModelConfig& config, const AnchorSet* previous) {
  std::vector<double> betas, gammas;
  for (const auto& s : samples) {
    for (const auto& l : s.labels) {
      betas.push_back(l.beta);
      gammas.push_back(l.gamma);
    }
  }
  AnchorSet a;
  a.beta = fit_or_keep(betas, config, previous ? previous->beta : std::vector<double>{});
  a.gamma = fit_or_keep(gammas, config, previous ? previous->gamma : std::vector<double>{});
  return a;
}

TrainResult train(const std::vector<RegionSample>& dataset, const ModelConfig& config, std::uint64_t rng_seed,
                  const EpochCallback& on_epoch, int workers) {
  config.validate();
  std::vector<const RegionSample*> used;
  for (const auto& s : dataset) {
    if (config.train_on_unlabeled || !s.labels.empty()) used.push_back(&s);
  }
  if (used.empty()) throw Error(ErrorCode::EmptyInput, "no training samples");

  std::vector<RegionSample> labeled;
  for (const auto* s : used) {
    if (!s->labels.empty()) labeled.push_back(*s);
  }

  std::vector<TrainItem> items(used.size());
  parallel_for(
      used.size(), [&](std::size_t i) { items[i].plan = make_encoder_plan(used[i]->points, config); }, workers);

  TrainResult result;
  result.model.config = config;
  result.model.params = init_params(config, rng_seed);
  result.model.anchors = labeled.empty() ? uniform_anchors(config.n_anchor) : fit_anchors(labeled, config);

  ModelParams& params = result.model.params;
  const Eigen::Index P = params.size();
  Eigen::VectorXd m = Eigen::VectorXd::Zero(P), v = Eigen::VectorXd::Zero(P), grad(P);
  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  const std::size_t n = items.size();
  const std::size_t batches = (n + config.batch_size - 1) / config.batch_size;
  const double total_steps = static_cast<double>(batches) * config.epochs;
  long long step = 0;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    if (epoch > 0 && !labeled.empty()) result.model.anchors = fit_anchors(labeled, config, &result.model.anchors);
    for (std::size_t i = 0; i < n; ++i) items[i].targets = assign_targets(*used[i], result.model.anchors, config);

    std::mt19937_64 rng(mix_seed(rng_seed, static_cast<std::uint64_t>(epoch), 0x5bu));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[uniform_int(rng, static_cast<int>(i))]);

    EpochStats stats;
    stats.epoch = epoch + 1;
    int hits = 0, valid = 0;
    for (std::size_t b = 0; b < batches; ++b) {
      std::vector<const TrainItem*> batch;
      for (std::size_t i = b * config.batch_size; i < std::min(n, (b + 1) * config.batch_size); ++i) {
        batch.push_back(&items[order[i]]);
        valid += batch.back()->targets.valid;
      }
      LossBreakdown l;
      int batch_hits = 0;
      try {
        l = batch_loss_gradient(params, batch, config, &grad, workers, &batch_hits);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::NonFiniteLoss) throw;
        result.aborted = true;
        result.abort_reason = "epoch " + std::to_string(epoch + 1) + ": " + e.what();
        return result;
      }
      hits += batch_hits;
      const double w = static_cast<double>(batch.size()) / static_cast<double>(n);
      stats.loss.total += w * l.total;
      stats.loss.theta_cls += w * l.theta_cls;
      stats.loss.theta_reg += w * l.theta_reg;
      stats.loss.width += w * l.width;
      stats.loss.offset += w * l.offset;
      stats.loss.anchor += w * l.anchor;

      const double lr = config.learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * step / total_steps));
      stats.learning_rate = lr;
      ++step;
      m = beta1 * m + (1.0 - beta1) * grad;
      v = beta2 * v + (1.0 - beta2) * grad.cwiseAbs2();
      const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
      Eigen::VectorXd next = params.array() - lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
      if (!next.allFinite()) {
        result.aborted = true;
        result.abort_reason = "epoch " + std::to_string(epoch + 1) + ": parameter update is not finite";
        return result;
      }
      params = std::move(next);
    }
    stats.theta_accuracy = valid > 0 ? static_cast<double>(hits) / valid : 0.0;
    result.history.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  return result;
}

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochStats>& history) {
  std::ofstream f(path);
  if (!f) throw Error(ErrorCode::Io, "cannot write " + path.string());
  f.precision(10);
  f << "epoch,total,theta_cls,theta_reg,width,offset,anchor,theta_accuracy,learning_rate\n";
  for (const auto& h : history) {
    f << h.epoch << ',' << h.loss.total << ',' << h.loss.theta_cls << ',' << h.loss.theta_reg << ','
      << h.loss.width << ',' << h.loss.offset << ',' << h.loss.anchor << ',' << h.theta_accuracy << ','
      << h.learning_rate << '\n';
  }
}

std::string encode_checkpoint(const Model& model) {
  std::string out(kMagic);
  bytes::put_uint<std::uint16_t>(out, kVersion);
  const std::string cfg = nlohmann::json(model.config).dump();
  bytes::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(cfg.size()));
  out += cfg;
  bytes::put_uint<std::uint64_t>(out, static_cast<std::uint64_t>(model.params.size()));
  for (Eigen::Index i = 0; i < model.params.size(); ++i) bytes::put_f64(out, model.params[i]);
  for (double a : model.anchors.beta) bytes::put_f64(out, a);
  for (double a : model.anchors.gamma) bytes::put_f64(out, a);
  return out;
}

Model decode_checkpoint(std::string_view data) {
  std::size_t offset = 0;
  bytes::Reader in(data, offset, ErrorCode::CorruptRecord);
  if (in.take(kMagic.size()) != kMagic) throw Error(ErrorCode::CorruptRecord, "bad checkpoint magic");
  if (in.uint<std::uint16_t>() != kVersion) throw Error(ErrorCode::CorruptRecord, "unsupported checkpoint version");
  Model model;
  const auto cfg_len = in.uint<std::uint32_t>();
  try {
    model.config = nlohmann::json::parse(in.take(cfg_len)).get<ModelConfig>();
    model.config.validate();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptRecord, std::string("checkpoint config: ") + e.what());
  }
  const auto count = in.uint<std::uint64_t>();
  if (count != static_cast<std::uint64_t>(ParamLayout(model.config).size())) {
    throw Error(ErrorCode::CorruptRecord, "parameter count does not match the stored config");
  }
  model.params.resize(static_cast<Eigen::Index>(count));
  for (Eigen::Index i = 0; i < model.params.size(); ++i) model.params[i] = in.f64();
  model.anchors.beta.resize(model.config.n_anchor);
  model.anchors.gamma.resize(model.config.n_anchor);
  for (double& a : model.anchors.beta) a = in.f64();
  for (double& a : model.anchors.gamma) a = in.f64();
  if (in.remaining() != 0) throw Error(ErrorCode::CorruptRecord, "trailing bytes in checkpoint");
  return model;
}

void save_checkpoint(const std::filesystem::path& path, const Model& model) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::Io, "cannot write " + path.string());
  const std::string data = encode_checkpoint(model);
  f.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!f) throw Error(ErrorCode::Io, "write failed: " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::Io, "cannot read " + path.string());
  const std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_checkpoint(data);
}

}  // namespace flexlog
