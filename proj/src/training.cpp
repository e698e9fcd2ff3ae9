#include "pargraph/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

#include "json.hpp"
#include "pargraph/weights_io.hpp"

namespace pargraph {

using nlohmann::json;

void TrainConfig::validate() const {
    if (lambda < 0 || lambda > 1) throw std::invalid_argument("train config: lambda must be in [0,1]");
    if (rho_ratio <= 0) throw std::invalid_argument("train config: rho ratio must be > 0");
    if (batch_size < 1) throw std::invalid_argument("train config: batch size must be >= 1");
    if (learning_rate < 0) throw std::invalid_argument("train config: learning rate must be >= 0");
    if (epochs < 0) throw std::invalid_argument("train config: epochs must be >= 0");
    if (tau <= 0 || tau >= 1) throw std::invalid_argument("train config: tau must be in (0,1)");
    ablations.validate();
}

namespace {

std::string frame_tag(const FrameAnnotation& f) {
    return "frame " + std::to_string(f.frame_id);
}

Tensor2 individual_targets(const FrameAnnotation& f, int n_labels) {
    Tensor2 t(f.n_subjects(), n_labels, 0.0);
    for (int u = 0; u < f.n_subjects(); ++u)
        for (int a : f.subjects[std::size_t(u)].actions) {
            if (a >= n_labels)
                throw DataError(frame_tag(f) + ": action id " + std::to_string(a) +
                                " outside the vocabulary");
            t(u, a) = 1.0;
        }
    return t;
}

// One target row per partition group, matched to the annotated group with the
// same member set.
Tensor2 social_targets(const FrameAnnotation& f, const Partition& partition, int n_labels) {
    Tensor2 t(int(partition.groups.size()), n_labels, 0.0);
    for (std::size_t k = 0; k < partition.groups.size(); ++k) {
        const std::vector<int>& members = partition.groups[k];
        const GroupAnnotation* found = nullptr;
        for (const GroupAnnotation& g : f.groups) {
            if (g.members.size() != members.size()) continue;
            std::vector<int> idxs;
            for (int id : g.members) idxs.push_back(f.subject_index(id));
            std::sort(idxs.begin(), idxs.end());
            if (idxs == members) { found = &g; break; }
        }
        if (!found)
            throw DataError(frame_tag(f) + ": no annotated activities for a partition group");
        for (int a : found->activities) {
            if (a >= n_labels)
                throw DataError(frame_tag(f) + ": social activity id " + std::to_string(a) +
                                " outside the vocabulary");
            t(int(k), a) = 1.0;
        }
    }
    return t;
}

Tensor2 global_targets(const FrameAnnotation& f, int n_labels) {
    Tensor2 t(1, n_labels, 0.0);
    for (int a : f.global_activities) {
        if (a >= n_labels)
            throw DataError(frame_tag(f) + ": global activity id " + std::to_string(a) +
                            " outside the vocabulary");
        t(0, a) = 1.0;
    }
    return t;
}

}  // namespace

ad::Var frame_loss(ad::Tape& t, const ModelParams& p, const ModelVars& v,
                   const FrameAnnotation& frame, const TrainConfig& config,
                   LossBreakdown* breakdown) {
    const PipelineSettings settings = config.pipeline();
    const Stage1 s1 = forward_stage1(t, p, v, frame, settings);
    const Partition partition = ground_truth_partition(frame);
    const Stage2 s2 = forward_stage2(t, p, v, s1, partition, settings);

    std::vector<ad::Var> parts;
    std::vector<double> weights;
    LossBreakdown b;

    const ad::Var li = t.bce_mean(s2.probs.individual, individual_targets(frame, p.dims.n_individual));
    b.individual = t.scalar(li);
    parts.push_back(li);
    weights.push_back(config.w_individual);

    if (s2.probs.social.valid()) {
        const ad::Var lp =
            t.bce_mean(s2.probs.social, social_targets(frame, partition, p.dims.n_social));
        b.social = t.scalar(lp);
        parts.push_back(lp);
        weights.push_back(config.w_social);
    }

    const ad::Var lg = t.bce_mean(s2.probs.global, global_targets(frame, p.dims.n_global));
    b.global_act = t.scalar(lg);
    parts.push_back(lg);
    weights.push_back(config.w_global);

    const Tensor2 rel_target = ground_truth_relation(frame);
    const Tensor2 rel_mask = offdiag_mask(frame.n_subjects());
    const ad::Var ld = t.bce_mean(s1.relation, rel_target, &rel_mask);
    b.relation = t.scalar(ld);
    parts.push_back(ld);
    weights.push_back(config.w_relation);

    const ad::Var total = t.weighted_sum_scalars(parts, weights);
    b.total = t.scalar(total);
    if (breakdown) *breakdown = b;
    return total;
}

LossBreakdown total_loss(const ModelParams& p, const FrameAnnotation& frame,
                         const TrainConfig& config) {
    ad::Tape t;
    const ModelVars v = bind_model(t, p);
    LossBreakdown b;
    frame_loss(t, p, v, frame, config, &b);
    return b;
}

TrainResult train(const std::vector<FrameAnnotation>& dataset, const TrainConfig& config,
                  const LabelVocab& vocab, std::vector<double>* live_trace) {
    config.validate();
    if (dataset.empty()) throw DataError("train: empty dataset");
    const int d = int(dataset.front().subjects.front().feature.size());
    for (const FrameAnnotation& f : dataset)
        if (!f.subjects.empty() && int(f.subjects.front().feature.size()) != d)
            throw DataError("train: inconsistent feature dim at " + frame_tag(f));

    TrainResult result;
    result.params = make_model(ModelDims::from_vocab(vocab, d), config.seed);
    std::vector<NamedTensor> named = named_tensors(result.params);
    result.adam = make_adam_state(named);

    std::vector<int> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 shuffle_rng(config.seed);

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double epoch_sum = 0;
        for (std::size_t start = 0; start < order.size(); start += std::size_t(config.batch_size)) {
            const std::size_t stop = std::min(order.size(), start + std::size_t(config.batch_size));
            ad::Tape tape;
            const ModelVars vars = bind_model(tape, result.params);
            std::vector<ad::Var> losses;
            for (std::size_t i = start; i < stop; ++i) {
                const FrameAnnotation& frame = dataset[std::size_t(order[i])];
                const ad::Var l = frame_loss(tape, result.params, vars, frame, config);
                if (!std::isfinite(tape.scalar(l)))
                    throw NumericError("train: non-finite loss at " + frame_tag(frame));
                epoch_sum += tape.scalar(l);
                losses.push_back(l);
            }
            const std::vector<double> w(losses.size(), 1.0 / double(losses.size()));
            const ad::Var batch_loss = tape.weighted_sum_scalars(losses, w);
            tape.backward(batch_loss);

            const std::vector<ad::Var> leaves = model_leaves(result.params, vars);
            std::vector<Tensor2> grads;
            grads.reserve(leaves.size());
            for (ad::Var leaf : leaves) grads.push_back(tape.grad(leaf));
            adam_step(result.adam, named, grads, config.learning_rate);
        }
        result.epoch_loss.push_back(epoch_sum / double(dataset.size()));
        if (live_trace) live_trace->push_back(result.epoch_loss.back());
    }
    return result;
}

ParPrediction infer(const FrameAnnotation& frame, const ModelParams& p, const TrainConfig& config,
                    const Partition* force_partition) {
    config.validate();
    ad::Tape t;
    const ModelVars v = bind_model(t, p);
    const PipelineSettings settings = config.pipeline();
    const Stage1 s1 = forward_stage1(t, p, v, frame, settings);

    ParPrediction out;
    out.relation = t.value(s1.relation);
    out.partition = force_partition ? *force_partition : cluster_groups(out.relation, 0);
    const Stage2 s2 = forward_stage2(t, p, v, s1, out.partition, settings);

    out.prob_individual = t.value(s2.probs.individual);
    out.prob_social = s2.probs.social.valid() ? t.value(s2.probs.social)
                                              : Tensor2(0, p.dims.n_social);
    out.prob_global = t.value(s2.probs.global);

    auto decode_row = [&](const Tensor2& probs, int row) {
        std::set<int> labels;
        for (int j = 0; j < probs.cols; ++j)
            if (probs(row, j) > config.tau) labels.insert(j);
        return labels;
    };
    for (int u = 0; u < out.prob_individual.rows; ++u)
        out.actions.push_back(decode_row(out.prob_individual, u));
    for (int k = 0; k < out.prob_social.rows; ++k)
        out.social.push_back(decode_row(out.prob_social, k));
    out.global_activities = decode_row(out.prob_global, 0);
    return out;
}

namespace {

json config_to_json(const TrainConfig& c) {
    return json{{"lambda", c.lambda},
                {"rho_ratio", c.rho_ratio},
                {"batch_size", c.batch_size},
                {"learning_rate", c.learning_rate},
                {"epochs", c.epochs},
                {"tau", c.tau},
                {"loss_weights",
                 {{"individual", c.w_individual},
                  {"social", c.w_social},
                  {"global", c.w_global},
                  {"relation", c.w_relation}}},
                {"ablations",
                 {{"no_residual_f", c.ablations.no_residual_f},
                  {"no_fhat", c.ablations.no_fhat},
                  {"euclid_dist", c.ablations.euclid_dist},
                  {"no_dbreve", c.ablations.no_dbreve},
                  {"no_e", c.ablations.no_e},
                  {"maxpool_agg", c.ablations.maxpool_agg},
                  {"no_g2i", c.ablations.no_g2i},
                  {"no_g2p", c.ablations.no_g2p}}},
                {"seed", c.seed}};
}

TrainConfig config_from_json(const json& j) {
    TrainConfig c;
    c.lambda = j.at("lambda").get<double>();
    c.rho_ratio = j.at("rho_ratio").get<double>();
    c.batch_size = j.at("batch_size").get<int>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.epochs = j.at("epochs").get<int>();
    c.tau = j.at("tau").get<double>();
    const json& w = j.at("loss_weights");
    c.w_individual = w.at("individual").get<double>();
    c.w_social = w.at("social").get<double>();
    c.w_global = w.at("global").get<double>();
    c.w_relation = w.at("relation").get<double>();
    const json& a = j.at("ablations");
    c.ablations.no_residual_f = a.at("no_residual_f").get<bool>();
    c.ablations.no_fhat = a.at("no_fhat").get<bool>();
    c.ablations.euclid_dist = a.at("euclid_dist").get<bool>();
    c.ablations.no_dbreve = a.at("no_dbreve").get<bool>();
    c.ablations.no_e = a.at("no_e").get<bool>();
    c.ablations.maxpool_agg = a.at("maxpool_agg").get<bool>();
    c.ablations.no_g2i = a.at("no_g2i").get<bool>();
    c.ablations.no_g2p = a.at("no_g2p").get<bool>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

std::vector<NamedTensor> adam_tensors(AdamState& adam, const std::vector<NamedTensor>& named,
                                      Tensor2& step) {
    std::vector<NamedTensor> out;
    for (std::size_t i = 0; i < named.size(); ++i) out.push_back({"m." + named[i].name, &adam.m[i]});
    for (std::size_t i = 0; i < named.size(); ++i) out.push_back({"v." + named[i].name, &adam.v[i]});
    out.push_back({"step", &step});
    return out;
}

}  // namespace

void save_checkpoint(const std::string& base_path, ModelParams& p, const AdamState& adam,
                     const TrainConfig& config, int epoch) {
    const std::vector<NamedTensor> named = named_tensors(p);
    save_weights(base_path + ".weights", named);

    AdamState& mutable_adam = const_cast<AdamState&>(adam);
    Tensor2 step(1, 1, double(adam.step));
    save_weights(base_path + ".adam", adam_tensors(mutable_adam, named, step));

    // The companion files always sit next to the sidecar under the same stem,
    // so their names are not recorded; a checkpoint triple can be moved or
    // renamed as a unit and identical trainings produce identical sidecars.
    json side{{"format", "pargraph-checkpoint-v1"},
              {"epoch", epoch},
              {"feature_dim", p.dims.feature_dim},
              {"n_individual", p.dims.n_individual},
              {"n_social", p.dims.n_social},
              {"n_global", p.dims.n_global},
              {"separate_global_pool", p.separate_global_pool},
              {"config", config_to_json(config)}};
    std::ofstream out(base_path + ".json");
    if (!out) throw DataError("checkpoint: cannot write " + base_path + ".json");
    out << side.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::string& base_path, const LabelVocab& vocab) {
    std::ifstream in(base_path + ".json");
    if (!in) throw DataError("checkpoint: cannot open " + base_path + ".json");
    json side;
    try {
        in >> side;
    } catch (const json::exception& e) {
        throw DataError("checkpoint: bad sidecar JSON: " + std::string(e.what()));
    }
    if (side.value("format", "") != "pargraph-checkpoint-v1")
        throw DataError("checkpoint: unknown sidecar format");

    Checkpoint c;
    c.epoch = side.at("epoch").get<int>();
    c.config = config_from_json(side.at("config"));

    ModelDims dims{side.at("feature_dim").get<int>(), side.at("n_individual").get<int>(),
                   side.at("n_social").get<int>(), side.at("n_global").get<int>()};
    if (dims.n_individual != vocab.n_individual() || dims.n_social != vocab.n_social() ||
        dims.n_global != vocab.n_global())
        throw DataError("checkpoint: vocabulary sizes do not match the checkpoint");
    c.params = make_model(dims, 0, side.at("separate_global_pool").get<bool>());
    std::vector<NamedTensor> named = named_tensors(c.params);
    load_weights_into(base_path + ".weights", named);

    c.adam = make_adam_state(named);
    Tensor2 step(1, 1, 0.0);
    load_weights_into(base_path + ".adam", adam_tensors(c.adam, named, step));
    c.adam.step = long(step(0, 0));
    return c;
}

}  // namespace pargraph
