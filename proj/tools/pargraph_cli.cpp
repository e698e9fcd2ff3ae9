// Command-line front end: dataset synthesis, training, evaluation, self-test.
//
// Exit codes: 0 ok, 1 usage, 2 data error, 3 numerical failure.

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "pargraph/dataset_io.hpp"
#include "pargraph/metrics.hpp"
#include "pargraph/synth.hpp"
#include "pargraph/training.hpp"
#include "pargraph/weights_io.hpp"

using nlohmann::json;
using namespace pargraph;

namespace {

struct AblationCli {
    AblationFlags flags;

    void attach(CLI::App* cmd) {
        cmd->add_flag("--no-residual-f", flags.no_residual_f,
                      "drop the original feature from the individual representation");
        cmd->add_flag("--no-fhat", flags.no_fhat, "drop the graph-updated feature");
        cmd->add_flag("--euclid-dist", flags.euclid_dist,
                      "plain pixel distance, no box-area scaling");
        cmd->add_flag("--no-dbreve", flags.no_dbreve, "relation from edge affinity alone");
        cmd->add_flag("--no-e", flags.no_e, "relation from distance affinity alone");
        cmd->add_flag("--maxpool-agg", flags.maxpool_agg,
                      "max-pool aggregation instead of attention pooling");
        cmd->add_flag("--no-g2i", flags.no_g2i, "individual readout without the global node");
        cmd->add_flag("--no-g2p", flags.no_g2p, "group readout without the global node");
    }
};

json synth_config_to_json(const SynthConfig& c, std::uint64_t seed) {
    return json{{"n_frames", c.n_frames},
                {"n_subjects", c.n_subjects},
                {"n_groups", c.n_groups},
                {"arena_width", c.arena_width},
                {"arena_height", c.arena_height},
                {"feature_dim", c.feature_dim},
                {"noise_sigma", c.noise_sigma},
                {"embed_seed", c.embed_seed},
                {"singleton_fraction", c.singleton_fraction},
                {"actions_per_subject", c.actions_per_subject},
                {"seed", seed}};
}

std::vector<FrameAnnotation> load_key_frames(const std::string& path, int stride) {
    if (stride < 1) throw DataError("key stride must be >= 1");
    std::vector<FrameAnnotation> all = load_dataset(path);
    std::vector<FrameAnnotation> out;
    for (FrameAnnotation& f : all)
        if (f.frame_id % stride == 0) out.push_back(std::move(f));
    return out;
}

int cmd_synth(const SynthConfig& config, std::uint64_t seed, const std::string& out_path,
              const std::string& blob) {
    const std::vector<FrameAnnotation> frames = synth_generate(config, seed);
    save_dataset(out_path, frames, blob);

    json meta{{"dataset", out_path}, {"config", synth_config_to_json(config, seed)}};
    std::ofstream meta_out(out_path + ".meta.json");
    meta_out << meta.dump(2) << "\n";

    std::cout << format_stats(dataset_stats(frames));
    return 0;
}

int cmd_train(const std::string& data_path, const std::string& out_base, TrainConfig config,
              int key_stride) {
    const std::vector<FrameAnnotation> frames = load_key_frames(data_path, key_stride);
    if (frames.empty()) throw DataError("train: no key frames in " + data_path);

    TrainResult result;
    std::vector<double> trace;
    std::string failure;
    try {
        result = train(frames, config, LabelVocab::make_default(), &trace);
    } catch (const NumericError& e) {
        failure = e.what();
    }

    json log{{"data", data_path},
             {"key_stride", key_stride},
             {"epoch_mean_loss", trace},
             {"completed", failure.empty()}};
    if (!failure.empty()) log["failure"] = failure;
    std::ofstream log_out(out_base + ".losses.json");
    log_out << log.dump(2) << "\n";

    if (!failure.empty()) throw NumericError(failure);  // partial log already on disk

    save_checkpoint(out_base, result.params, result.adam, config, config.epochs);
    std::cout << "checkpoint " << out_base << ".weights\n";
    if (!result.epoch_loss.empty())
        std::cout << "final epoch mean loss " << result.epoch_loss.back() << "\n";
    return 0;
}

int cmd_eval(const std::string& data_path, const std::string& checkpoint_base,
             const std::string& report_path, const std::string& predictions_path, bool gt_groups,
             int key_stride, int threads, double tau_override) {
    const std::vector<FrameAnnotation> frames = load_key_frames(data_path, key_stride);
    if (frames.empty()) throw DataError("eval: no key frames in " + data_path);

    Checkpoint ckpt = load_checkpoint(checkpoint_base);
    if (tau_override > 0) ckpt.config.tau = tau_override;

    std::vector<ParPrediction> preds(frames.size());
    const int n_threads = std::max(1, threads);
    std::atomic<std::size_t> next{0};
    std::vector<std::string> errors(static_cast<std::size_t>(n_threads));
    auto worker = [&](int tid) {
        try {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= frames.size()) break;
                if (gt_groups) {
                    const Partition p = ground_truth_partition(frames[i]);
                    preds[i] = infer(frames[i], ckpt.params, ckpt.config, &p);
                } else {
                    preds[i] = infer(frames[i], ckpt.params, ckpt.config);
                }
            }
        } catch (const std::exception& e) {
            errors[std::size_t(tid)] = e.what();
        }
    };
    if (n_threads == 1) {
        worker(0);
    } else {
        std::vector<std::thread> pool;
        for (int tIdx = 0; tIdx < n_threads; ++tIdx) pool.emplace_back(worker, tIdx);
        for (std::thread& th : pool) th.join();
    }
    for (const std::string& e : errors)
        if (!e.empty()) throw DataError("eval: " + e);

    const MetricsReport report = evaluate_frames(frames, preds);
    std::cout << report_to_table(report);

    if (!report_path.empty()) {
        json j = json::parse(report_to_json(report));
        j["config"] = {{"checkpoint", checkpoint_base},
                       {"data", data_path},
                       {"gt_groups", gt_groups},
                       {"key_stride", key_stride},
                       {"tau", ckpt.config.tau}};
        std::ofstream out(report_path);
        if (!out) throw DataError("eval: cannot write " + report_path);
        out << j.dump(2) << "\n";
    }
    if (!predictions_path.empty()) {
        std::ofstream out(predictions_path);
        if (!out) throw DataError("eval: cannot write " + predictions_path);
        for (std::size_t i = 0; i < frames.size(); ++i) {
            const ParPrediction& p = preds[i];
            json jp{{"frame_id", frames[i].frame_id}};
            jp["actions"] = p.actions;
            json groups = json::array();
            for (std::size_t k = 0; k < p.partition.groups.size(); ++k) {
                std::vector<int> ids;
                for (int idx : p.partition.groups[k])
                    ids.push_back(frames[i].subjects[std::size_t(idx)].id);
                groups.push_back({{"members", ids}, {"activities", p.social[k]}});
            }
            jp["groups"] = groups;
            json singles = json::array();
            for (int idx : p.partition.singletons)
                singles.push_back(frames[i].subjects[std::size_t(idx)].id);
            jp["singletons"] = singles;
            jp["global"] = p.global_activities;
            out << jp.dump() << "\n";
        }
    }
    return 0;
}

// ---- self-test ------------------------------------------------------------

int check(bool ok, const std::string& name, int& failures) {
    std::cout << (ok ? "PASS " : "FAIL ") << name << "\n";
    if (!ok) ++failures;
    return failures;
}

// Definition-level P/R/F oracle, independent of the metrics module's
// accumulation order.
Prf oracle_prf(const std::set<int>& pred, const std::set<int>& gt) {
    if (pred.empty() && gt.empty()) return {1, 1, 1};
    if (pred.empty() || gt.empty()) return {0, 0, 0};
    double inter = 0;
    for (int a : pred) inter += gt.count(a) ? 1 : 0;
    const double p = inter / double(pred.size());
    const double r = inter / double(gt.size());
    return {p, r, p + r > 0 ? 2 * p * r / (p + r) : 0.0};
}

int cmd_selftest() {
    int failures = 0;

    {  // gradient integrity on a small planted frame
        SynthConfig cfg;
        cfg.n_subjects = 4;
        cfg.n_groups = 2;
        cfg.feature_dim = 8;
        const FrameAnnotation frame = synth_generate(cfg, 11).front();
        TrainConfig tc;
        ModelParams params = make_model(ModelDims::from_vocab(LabelVocab::make_default(), 8), 3);
        std::vector<NamedTensor> named = named_tensors(params);
        std::vector<Tensor2> values;
        for (const NamedTensor& nt : named) values.push_back(*nt.tensor);

        ad::Tape tape;
        const ModelVars vars = bind_model(tape, params);
        LossBreakdown b;
        const ad::Var loss = frame_loss(tape, params, vars, frame, tc, &b);
        tape.backward(loss);
        std::vector<Tensor2> grads;
        for (ad::Var leaf : model_leaves(params, vars)) grads.push_back(tape.grad(leaf));

        auto loss_fn = [&](const std::vector<Tensor2>& p) {
            ModelParams probe = params;
            std::vector<NamedTensor> probe_named = named_tensors(probe);
            for (std::size_t i = 0; i < probe_named.size(); ++i) *probe_named[i].tensor = p[i];
            return total_loss(probe, frame, tc).total;
        };
        const double err = finite_diff_check(loss_fn, values, grads, 1e-5);
        check(err < 1e-4, "gradients match finite differences (err " + std::to_string(err) + ")",
              failures);
    }

    {  // metric arithmetic against definition-level counting
        std::mt19937_64 rng(2024);
        bool ok = true;
        for (int trial = 0; trial < 200 && ok; ++trial) {
            std::uniform_int_distribution<int> n_labels(0, 4);
            std::set<int> a, b;
            for (int i = n_labels(rng); i > 0; --i) a.insert(int(rng() % 6));
            for (int i = n_labels(rng); i > 0; --i) b.insert(int(rng() % 6));
            const Prf got = multilabel_prf(a, b);
            const Prf want = oracle_prf(a, b);
            ok = std::abs(got.p - want.p) < 1e-12 && std::abs(got.r - want.r) < 1e-12 &&
                 std::abs(got.f1 - want.f1) < 1e-12;
        }
        check(ok, "multilabel P/R/F1 matches exhaustive counting", failures);

        const double f_a = overall_f1(0.332, 0.082, 0.507);
        check(std::abs(100 * f_a - 30.7) < 0.05, "overall F1 rounding anchor", failures);
    }

    {  // clustering recovery on planted data
        bool ok = true;
        for (std::uint64_t seed = 1; seed <= 5 && ok; ++seed) {
            SynthConfig cfg;
            cfg.n_subjects = 9;
            cfg.n_groups = 3;
            const FrameAnnotation frame = synth_generate(cfg, seed).front();
            const Partition pred = cluster_groups(oracle_relation(frame), 0);
            const Partition gt = ground_truth_partition(frame);
            const GroupDetection det = group_detection_scores({pred}, {gt});
            ok = det.mat_iou == 1.0;
        }
        check(ok, "spectral clustering recovers planted groups", failures);
    }

    {  // weight-file corruption is detected
        namespace fs = std::filesystem;
        const fs::path dir = fs::temp_directory_path() / "pargraph_selftest";
        fs::create_directories(dir);
        const std::string path = (dir / "w.bin").string();
        Tensor2 t(2, 2, 0.5);
        save_weights(path, {{"t", &t}});
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(-3, std::ios::end);
        const char junk = 0x7f;
        f.write(&junk, 1);
        f.close();
        bool threw = false;
        try {
            load_weights(path);
        } catch (const DataError&) {
            threw = true;
        }
        fs::remove_all(dir);
        check(threw, "corrupted weight file rejected", failures);
    }

    std::cout << (failures == 0 ? "selftest OK\n" : "selftest FAILED\n");
    return failures == 0 ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hierarchical graph network for panoramic activity recognition"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a planted synthetic dataset");
    SynthConfig synth_cfg;
    std::uint64_t synth_seed = 0;
    std::string synth_out, synth_blob;
    synth->add_option("--out", synth_out, "output NDJSON path")->required();
    synth->add_option("--blob", synth_blob, "store features in this blob file (relative to --out)");
    synth->add_option("--seed", synth_seed, "RNG seed")->required();
    synth->add_option("--frames", synth_cfg.n_frames, "number of frames");
    synth->add_option("--subjects", synth_cfg.n_subjects, "subjects per frame");
    synth->add_option("--groups", synth_cfg.n_groups, "groups per frame");
    synth->add_option("--arena-width", synth_cfg.arena_width, "image width in pixels");
    synth->add_option("--arena-height", synth_cfg.arena_height, "image height in pixels");
    synth->add_option("--dim", synth_cfg.feature_dim, "feature dimension");
    synth->add_option("--sigma", synth_cfg.noise_sigma, "feature noise sigma");
    synth->add_option("--singleton-fraction", synth_cfg.singleton_fraction,
                      "fraction of ungrouped subjects");
    synth->add_option("--actions-per-subject", synth_cfg.actions_per_subject,
                      "individual actions per subject");
    synth->add_option("--embed-seed", synth_cfg.embed_seed, "label embedding seed");

    // train
    auto* train_cmd = app.add_subcommand("train", "train on an NDJSON dataset");
    std::string train_data, train_out;
    TrainConfig train_cfg;
    int train_stride = 15;
    train_cmd->add_option("--data", train_data, "training NDJSON")->required();
    train_cmd->add_option("--out", train_out, "checkpoint base path")->required();
    train_cmd->add_option("--seed", train_cfg.seed, "RNG seed")->required();
    train_cmd->add_option("--epochs", train_cfg.epochs, "training epochs");
    train_cmd->add_option("--batch", train_cfg.batch_size, "batch size");
    train_cmd->add_option("--lr", train_cfg.learning_rate, "Adam learning rate");
    train_cmd->add_option("--lambda", train_cfg.lambda, "edge-affinity weight in the relation");
    train_cmd->add_option("--rho-ratio", train_cfg.rho_ratio,
                          "distance-mask threshold as a fraction of image width");
    train_cmd->add_option("--tau", train_cfg.tau, "label emission threshold");
    train_cmd->add_option("--key-stride", train_stride, "keep frames with id %% stride == 0");
    AblationCli train_abl;
    train_abl.attach(train_cmd);

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    std::string eval_data, eval_ckpt, eval_report, eval_preds;
    bool gt_groups = false;
    int eval_stride = 15, eval_threads = 1;
    double eval_tau = 0;
    eval_cmd->add_option("--data", eval_data, "evaluation NDJSON")->required();
    eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint base path")->required();
    eval_cmd->add_option("--report", eval_report, "write the JSON report here");
    eval_cmd->add_option("--predictions", eval_preds, "write per-frame predictions (NDJSON)");
    eval_cmd->add_flag("--gt-groups", gt_groups, "use ground-truth partitions at inference");
    eval_cmd->add_option("--key-stride", eval_stride, "keep frames with id %% stride == 0");
    eval_cmd->add_option("--threads", eval_threads, "parallel inference threads");
    eval_cmd->add_option("--tau", eval_tau, "override the checkpoint's label threshold");

    // selftest
    auto* selftest = app.add_subcommand("selftest", "run built-in consistency checks");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (*synth) return cmd_synth(synth_cfg, synth_seed, synth_out, synth_blob);
        if (*train_cmd) {
            train_cfg.ablations = train_abl.flags;
            return cmd_train(train_data, train_out, train_cfg, train_stride);
        }
        if (*eval_cmd)
            return cmd_eval(eval_data, eval_ckpt, eval_report, eval_preds, gt_groups, eval_stride,
                            eval_threads, eval_tau);
        if (*selftest) return cmd_selftest();
    } catch (const NumericError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
