#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "pargraph/clustering.hpp"
#include "pargraph/model.hpp"

namespace pargraph {

struct TrainConfig {
    double lambda = 0.5;
    double rho_ratio = 0.2;
    int batch_size = 4;
    double learning_rate = 2e-5;
    int epochs = 50;
    double tau = 0.5;  // multi-label emission threshold
    double w_individual = 1.0, w_social = 1.0, w_global = 1.0, w_relation = 1.0;
    AblationFlags ablations;
    std::uint64_t seed = 0;

    void validate() const;
    PipelineSettings pipeline() const { return {lambda, rho_ratio, ablations}; }
};

struct LossBreakdown {
    double total = 0, individual = 0, social = 0, global_act = 0, relation = 0;
};

// Loss over one frame with the teacher-forced ground-truth partition; the
// returned 1x1 node is the weighted component sum. Frames without groups of
// >= 2 members contribute no social term.
ad::Var frame_loss(ad::Tape& t, const ModelParams& p, const ModelVars& v,
                   const FrameAnnotation& frame, const TrainConfig& config,
                   LossBreakdown* breakdown = nullptr);

// Convenience: evaluate the loss components on a fresh tape.
LossBreakdown total_loss(const ModelParams& p, const FrameAnnotation& frame,
                         const TrainConfig& config);

struct TrainResult {
    ModelParams params;
    AdamState adam;
    std::vector<double> epoch_loss;  // mean frame loss per epoch
};

// live_trace, when given, receives each epoch's mean loss as it completes, so
// a partial trace survives an abort on numerical failure.
TrainResult train(const std::vector<FrameAnnotation>& dataset, const TrainConfig& config,
                  const LabelVocab& vocab = LabelVocab::make_default(),
                  std::vector<double>* live_trace = nullptr);

struct ParPrediction {
    std::vector<std::set<int>> actions;  // one set per subject
    Partition partition;
    std::vector<std::set<int>> social;   // aligned with partition.groups
    std::set<int> global_activities;
    Tensor2 prob_individual;  // N x n_individual
    Tensor2 prob_social;      // K x n_social (0 x n when no groups)
    Tensor2 prob_global;      // 1 x n_global
    Tensor2 relation;         // N x N
};

// Forward pass, relation clustering, hierarchy rebuild with the predicted
// partition, thresholded label decoding. force_partition substitutes a known
// partition (teacher-forced evaluation).
ParPrediction infer(const FrameAnnotation& frame, const ModelParams& p, const TrainConfig& config,
                    const Partition* force_partition = nullptr);

// Checkpoint: <base>.weights + <base>.adam (both in the weight-file format;
// Adam moments are stored under m./v. prefixed names) + <base>.json sidecar.
void save_checkpoint(const std::string& base_path, ModelParams& p, const AdamState& adam,
                     const TrainConfig& config, int epoch);

struct Checkpoint {
    ModelParams params;
    AdamState adam;
    TrainConfig config;
    int epoch = 0;
};

Checkpoint load_checkpoint(const std::string& base_path,
                           const LabelVocab& vocab = LabelVocab::make_default());

}  // namespace pargraph
