#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "flexlog/model.hpp"

namespace flexlog {

struct Model {
  ModelConfig config;
  ModelParams params;
  AnchorSet anchors;
};

struct EpochStats {
  int epoch = 0;
  LossBreakdown loss;  // mean over the epoch's training items
  double theta_accuracy = 0.0;
  double learning_rate = 0.0;
};

struct TrainResult {
  Model model;
  std::vector<EpochStats> history;
  bool aborted = false;  // non-finite loss; `model` holds the last good parameters
  std::string abort_reason;
};

/// Anchors fit to every label angle in `samples` (uniform anchors when the
/// angles are degenerate). A non-empty `previous` warm-starts the fit.
AnchorSet fit_anchors(const std::vector<RegionSample>& samples, const ModelConfig& config,
                      const AnchorSet* previous = nullptr);

using EpochCallback = std::function<void(const EpochStats&)>;

/// Adam with cosine-decayed step size over config.epochs epochs of shuffled
/// mini-batches. Deterministic for a given seed whatever the worker count.
TrainResult train(const std::vector<RegionSample>& dataset, const ModelConfig& config, std::uint64_t rng_seed,
                  const EpochCallback& on_epoch = {}, int workers = 0);

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochStats>& history);

std::string encode_checkpoint(const Model& model);
Model decode_checkpoint(std::string_view bytes);
void save_checkpoint(const std::filesystem::path& path, const Model& model);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace flexlog
