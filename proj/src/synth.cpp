#include "pargraph/synth.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

namespace pargraph {

void SynthConfig::validate() const {
    if (n_frames < 1) throw DataError("synth: n_frames must be >= 1");
    if (n_subjects < 1) throw DataError("synth: n_subjects must be >= 1");
    if (n_groups < 0 || n_groups > n_subjects) throw DataError("synth: need 0 <= n_groups <= n_subjects");
    if (arena_width < 1 || arena_height < 1) throw DataError("synth: arena must be positive");
    if (feature_dim < 1) throw DataError("synth: feature_dim must be >= 1");
    if (noise_sigma < 0) throw DataError("synth: noise sigma must be >= 0");
    if (singleton_fraction < 0 || singleton_fraction > 1)
        throw DataError("synth: singleton_fraction must be in [0,1]");
    if (actions_per_subject < 1) throw DataError("synth: actions_per_subject must be >= 1");
    vocab.validate();
    const int n_single = int(std::lround(singleton_fraction * n_subjects));
    if (n_groups > 0 && n_subjects - n_single < 2 * n_groups)
        throw DataError("synth: not enough subjects for " + std::to_string(n_groups) +
                        " groups of >= 2 after reserving singletons");
}

namespace {

// Disc radius for planted clusters: members land within r of their centroid,
// centroids at least 6r apart, so subject pairs are <= 2r within a group and
// >= 4r across groups. oracle_relation leans on the same margins.
double planted_radius(double w, double h) { return 0.045 * std::min(w, h); }

struct Embeddings {
    std::vector<std::vector<double>> social;  // one per social-activity id
    std::vector<std::vector<double>> action;  // one per individual-action id
};

Embeddings make_embeddings(const SynthConfig& cfg) {
    std::mt19937_64 rng(cfg.embed_seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Embeddings e;
    auto fill = [&](std::vector<std::vector<double>>& table, int n) {
        table.resize(std::size_t(n));
        for (auto& row : table) {
            row.resize(std::size_t(cfg.feature_dim));
            for (double& v : row) v = gauss(rng);
        }
    };
    fill(e.social, cfg.vocab.n_social());
    fill(e.action, cfg.vocab.n_individual());
    return e;
}

// Centroids for groups and singletons, pairwise separated by >= min_sep.
std::vector<std::pair<double, double>> place_centroids(int count, double min_sep, double margin,
                                                       double w, double h, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> ux(margin, w - margin);
    std::uniform_real_distribution<double> uy(margin, h - margin);
    if (w - margin <= margin || h - margin <= margin)
        throw DataError("synth: arena too small to separate groups from its edges");
    std::vector<std::pair<double, double>> out;
    int attempts = 0;
    const int max_attempts = 4000 * count;
    while (int(out.size()) < count) {
        if (++attempts > max_attempts)
            throw DataError("synth: arena too small to separate groups by the required spacing");
        const double x = ux(rng), y = uy(rng);
        bool ok = true;
        for (const auto& [cx, cy] : out)
            if (std::hypot(x - cx, y - cy) < min_sep) { ok = false; break; }
        if (ok) out.emplace_back(x, y);
    }
    return out;
}

FrameAnnotation make_frame(const SynthConfig& cfg, const Embeddings& emb, long frame_id,
                           std::uint64_t frame_seed) {
    std::mt19937_64 rng(frame_seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double W = cfg.arena_width, H = cfg.arena_height;
    const double radius = planted_radius(W, H);

    const int n_single = int(std::lround(cfg.singleton_fraction * cfg.n_subjects));
    const int n_grouped = cfg.n_subjects - n_single;
    std::vector<int> sizes;  // member count per group, each >= 2
    if (cfg.n_groups > 0) {
        sizes.assign(std::size_t(cfg.n_groups), 2);
        int extra = n_grouped - 2 * cfg.n_groups;
        std::uniform_int_distribution<int> pick(0, cfg.n_groups - 1);
        while (extra-- > 0) ++sizes[std::size_t(pick(rng))];
    }
    const int placed = int(std::accumulate(sizes.begin(), sizes.end(), 0));
    const int n_clusters = cfg.n_groups + (n_grouped - placed) + n_single;
    auto centroids = place_centroids(n_clusters, 6.0 * radius, 3.0 * radius, W, H, rng);

    // One social activity per cluster; distinct across the frame when the
    // vocabulary allows it. Singletons get one too (it drives their feature
    // and action labels) but it is never annotated as a group activity.
    std::vector<int> activity_ids(std::size_t(cfg.vocab.n_social()));
    std::iota(activity_ids.begin(), activity_ids.end(), 0);
    std::shuffle(activity_ids.begin(), activity_ids.end(), rng);
    std::vector<int> cluster_activity(static_cast<std::size_t>(n_clusters));
    for (int c = 0; c < n_clusters; ++c) {
        if (c < int(activity_ids.size())) cluster_activity[std::size_t(c)] = activity_ids[std::size_t(c)];
        else {
            std::uniform_int_distribution<int> pick(0, cfg.vocab.n_social() - 1);
            cluster_activity[std::size_t(c)] = pick(rng);
        }
    }

    FrameAnnotation f;
    f.frame_id = frame_id;
    f.image_width = cfg.arena_width;
    f.image_height = cfg.arena_height;

    std::uniform_real_distribution<double> u01(0.0, 1.0);
    auto add_subject = [&](int cluster) {
        // Uniform position inside the cluster disc.
        const double ang = 2.0 * M_PI * u01(rng);
        const double rad = radius * std::sqrt(u01(rng));
        const double px = centroids[std::size_t(cluster)].first + rad * std::cos(ang);
        const double py = centroids[std::size_t(cluster)].second + rad * std::sin(ang);

        SubjectAnnotation s;
        s.id = int(f.subjects.size()) + 1;
        // Box height grows with y so nearer subjects (larger y) look larger.
        const double bh = 0.22 * H * (0.35 + 0.65 * py / H);
        const double bw = 0.45 * bh;
        s.bbox = {px - 0.5 * bw, py - bh, bw, bh};

        const int act = cluster_activity[std::size_t(cluster)];
        // Fixed label-conditional action pool: three actions per activity.
        std::vector<int> pool = {(3 * act) % cfg.vocab.n_individual(),
                                 (3 * act + 1) % cfg.vocab.n_individual(),
                                 (3 * act + 2) % cfg.vocab.n_individual()};
        std::shuffle(pool.begin(), pool.end(), rng);
        const int take = std::min<int>(cfg.actions_per_subject, int(pool.size()));
        s.actions.insert(pool.begin(), pool.begin() + take);

        s.feature.assign(std::size_t(cfg.feature_dim), 0.0);
        for (int j = 0; j < cfg.feature_dim; ++j) s.feature[std::size_t(j)] = emb.social[std::size_t(act)][std::size_t(j)];
        for (int a : s.actions)
            for (int j = 0; j < cfg.feature_dim; ++j)
                s.feature[std::size_t(j)] += 0.35 * emb.action[std::size_t(a)][std::size_t(j)] / double(s.actions.size());
        if (cfg.noise_sigma > 0)
            for (double& v : s.feature) v += cfg.noise_sigma * gauss(rng);

        const int id = s.id;
        f.subjects.push_back(std::move(s));
        return id;
    };

    int cluster = 0;
    for (int g = 0; g < cfg.n_groups; ++g, ++cluster) {
        GroupAnnotation grp;
        grp.activities.insert(cluster_activity[std::size_t(cluster)]);
        for (int m = 0; m < sizes[std::size_t(g)]; ++m) grp.members.insert(add_subject(cluster));
        f.groups.push_back(std::move(grp));
    }
    for (; cluster < n_clusters; ++cluster) {
        GroupAnnotation solo;  // singletons are annotated as one-member groups
        solo.members.insert(add_subject(cluster));
        f.groups.push_back(std::move(solo));
    }

    // Global labels: activities of the most populated group(s), folded into
    // the global vocabulary.
    int best = 0;
    for (const GroupAnnotation& g : f.groups)
        if (int(g.members.size()) >= 2) best = std::max(best, int(g.members.size()));
    for (const GroupAnnotation& g : f.groups)
        if (int(g.members.size()) == best)
            for (int a : g.activities) f.global_activities.insert(a % cfg.vocab.n_global());
    if (f.global_activities.empty() && !f.subjects.empty()) {
        // All-singleton frame: fall back to the first subject's driving activity.
        f.global_activities.insert(cluster_activity[0] % cfg.vocab.n_global());
    }

    f.validate();
    return f;
}

}  // namespace

std::vector<FrameAnnotation> synth_generate(const SynthConfig& config, std::uint64_t seed) {
    config.validate();
    const Embeddings emb = make_embeddings(config);
    std::mt19937_64 master(seed);
    std::vector<FrameAnnotation> out;
    out.reserve(std::size_t(config.n_frames));
    for (int i = 0; i < config.n_frames; ++i) {
        const std::uint64_t frame_seed = master();
        // Key-frame ids: one annotated frame per 15 video frames.
        out.push_back(make_frame(config, emb, 15L * i, frame_seed));
    }
    return out;
}

namespace {

// Median over subjects of the squared distance to the nearest other subject.
// This self-tuning bandwidth makes within-group pairs land around e^-1 while
// cross-group pairs, several bandwidths away, decay to nearly zero.
double nn_median_sq(const Tensor2& sq) {
    const int n = sq.rows;
    std::vector<double> nn;
    for (int u = 0; u < n; ++u) {
        double best = std::numeric_limits<double>::infinity();
        for (int v = 0; v < n; ++v)
            if (v != u) best = std::min(best, sq(u, v));
        if (std::isfinite(best)) nn.push_back(best);
    }
    if (nn.empty()) return 0.0;
    std::nth_element(nn.begin(), nn.begin() + std::ptrdiff_t(nn.size() / 2), nn.end());
    return nn[nn.size() / 2];
}

}  // namespace

Tensor2 oracle_relation(const FrameAnnotation& frame, double lambda) {
    const int n = frame.n_subjects();
    Tensor2 feat = frame.feature_matrix();

    // Squared feature and anchor distances. The feature bandwidth is
    // self-tuned from nearest neighbors (so it inflates with feature noise);
    // the spatial bandwidth is the planted disc diameter, putting same-group
    // pairs at e^-1 or better and cross-group pairs (>= 4r away) below e^-4.
    Tensor2 fsq(n, n, 0.0), ssq(n, n, 0.0);
    for (int u = 0; u < n; ++u) {
        const BBox& bu = frame.subjects[std::size_t(u)].bbox;
        for (int v = 0; v < n; ++v) {
            double s = 0;
            for (int j = 0; j < feat.cols; ++j) {
                const double d = feat(u, j) - feat(v, j);
                s += d * d;
            }
            fsq(u, v) = s;
            const BBox& bv = frame.subjects[std::size_t(v)].bbox;
            const double dx = bu.anchor_x() - bv.anchor_x();
            const double dy = bu.anchor_y() - bv.anchor_y();
            ssq(u, v) = dx * dx + dy * dy;
        }
    }
    const double bf = std::max(nn_median_sq(fsq), 1e-12);
    const double diameter = 2.0 * planted_radius(frame.image_width, frame.image_height);
    const double bs = std::max(diameter * diameter, 1e-12);

    Tensor2 r(n, n);
    for (int u = 0; u < n; ++u) {
        for (int v = 0; v < n; ++v)
            r(u, v) = u == v ? 1.0
                             : lambda * std::exp(-fsq(u, v) / bf) +
                                   (1.0 - lambda) * std::exp(-ssq(u, v) / bs);
    }
    return r;
}

DatasetStats dataset_stats(const std::vector<FrameAnnotation>& frames) {
    DatasetStats s;
    s.frames = int(frames.size());
    for (const FrameAnnotation& f : frames) {
        s.subjects += f.n_subjects();
        if (!f.subjects.empty()) s.feature_dim = int(f.subjects.front().feature.size());
        std::size_t covered = 0;
        for (const GroupAnnotation& g : f.groups) {
            covered += g.members.size();
            if (g.members.size() >= 2) {
                ++s.groups;
                s.social_labels += long(g.activities.size());
            } else {
                ++s.singletons;
            }
        }
        s.singletons += f.n_subjects() - int(covered);
        for (const SubjectAnnotation& subj : f.subjects) s.individual_labels += long(subj.actions.size());
        s.global_labels += long(f.global_activities.size());
    }
    return s;
}

std::string format_stats(const DatasetStats& s) {
    std::ostringstream os;
    os << "frames               " << s.frames << "\n"
       << "subjects             " << s.subjects << "\n"
       << "groups (>=2)         " << s.groups << "\n"
       << "singletons           " << s.singletons << "\n"
       << "individual labels    " << s.individual_labels << "\n"
       << "social labels        " << s.social_labels << "\n"
       << "global labels        " << s.global_labels << "\n"
       << "feature dim          " << s.feature_dim << "\n"
       << "subjects per frame   " << s.subjects_per_frame() << "\n"
       << "groups per frame     " << s.groups_per_frame() << "\n";
    return os.str();
}

}  // namespace pargraph
