#ifndef GKC_EXPERIMENT_HPP
#define GKC_EXPERIMENT_HPP

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "gkc/data.hpp"
#include "gkc/drd.hpp"
#include "gkc/gkc.hpp"
#include "gkc/head.hpp"

namespace gkc {

struct TrainConfig {
    std::size_t epochs = 1000;
    std::size_t batch_size = 32;
    double mlp_lr = 0.001;
    double prob_lr = 0.01;
    double jsd_weight = 1e-4;
    std::size_t patience = 100;
    std::uint64_t seed = 0;
    /// false freezes the masks at their initial graphs (ablation).
    bool learn_masks = true;

    void validate() const {
        if (batch_size < 1) throw InputError("batch size must be positive");
        if (!(mlp_lr > 0.0) || !(prob_lr > 0.0)) throw InputError("learning rates must be positive");
        if (!(jsd_weight >= 0.0)) throw InputError("jsd weight must be non-negative");
        if (patience < 1) throw InputError("early-stopping patience must be positive");
    }
};

struct EpochStats {
    std::size_t epoch = 0; // 1-based
    double train_loss = 0.0;
    double train_acc = 0.0;
    double val_loss = 0.0;
    double val_acc = 0.0;
    double sec_per_epoch = 0.0;
    double edit_accept_rate = 0.0;
};

struct RunReport {
    std::vector<EpochStats> epochs;
    std::size_t best_epoch = 0; // 0: the initial parameters
    double best_val_loss = std::numeric_limits<double>::infinity();
    double best_val_acc = 0.0;
    double test_loss = std::numeric_limits<double>::quiet_NaN();
    double test_accuracy = std::numeric_limits<double>::quiet_NaN();
    bool stopped_early = false;
    bool diverged = false;
    std::size_t edits_proposed = 0;
    std::size_t edits_accepted = 0;
    std::vector<double> codebook_displacement; // last_displacement per junction after the final epoch
};

/// Shortest representation that reads back to the same double.
inline std::string format_double(double x) {
    if (std::isnan(x)) return "nan";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

/// Per-epoch curve as CSV. Wall-clock time is the only non-reproducible
/// column; `include_timing = false` drops it.
inline void write_report_csv(std::ostream& os, const RunReport& r, bool include_timing = true) {
    os << "epoch,train_loss,train_acc,val_loss,val_acc";
    if (include_timing) os << ",sec_per_epoch";
    os << ",edit_accept_rate\n";
    for (const auto& e : r.epochs) {
        os << e.epoch << ',' << format_double(e.train_loss) << ',' << format_double(e.train_acc) << ','
           << format_double(e.val_loss) << ',' << format_double(e.val_acc);
        if (include_timing) os << ',' << format_double(e.sec_per_epoch);
        os << ',' << format_double(e.edit_accept_rate) << '\n';
    }
}

/// Summary lines (key=value) of a finished run.
inline void write_report_summary(std::ostream& os, const RunReport& r) {
    os << "best_epoch=" << r.best_epoch << '\n'
       << "best_val_loss=" << format_double(r.best_val_loss) << '\n'
       << "best_val_acc=" << format_double(r.best_val_acc) << '\n'
       << "test_loss=" << format_double(r.test_loss) << '\n'
       << "test_accuracy=" << format_double(r.test_accuracy) << '\n'
       << "epochs_run=" << r.epochs.size() << '\n'
       << "stopped_early=" << r.stopped_early << '\n'
       << "diverged=" << r.diverged << '\n'
       << "edits_proposed=" << r.edits_proposed << '\n'
       << "edits_accepted=" << r.edits_accepted << '\n';
    for (std::size_t j = 0; j < r.codebook_displacement.size(); ++j)
        os << "codebook." << j << ".last_displacement=" << format_double(r.codebook_displacement[j]) << '\n';
}

// ---------------------------------------------------------------------------
// Evaluation

struct EvalResult {
    double loss = 0.0; // mean cross-entropy
    double jsd = 0.0;  // mean summed JSD over banks
    double accuracy = 0.0;
    std::vector<std::size_t> predictions;
};

namespace detail {

inline constexpr std::size_t kEvalChunk = 64;

template <class Fn>
void for_chunks(const GraphDataset& ds, std::span<const std::size_t> indices, std::size_t chunk, Fn&& fn) {
    for (std::size_t start = 0; start < indices.size(); start += chunk) {
        const auto n = std::min(chunk, indices.size() - start);
        auto idx = indices.subspan(start, n);
        std::vector<const LabeledGraph*> graphs;
        for (auto i : idx) graphs.push_back(&ds.graphs.at(i));
        fn(idx, std::span<const LabeledGraph* const>(graphs));
    }
}

} // namespace detail

/// Mean loss and accuracy of `params` on `indices`, with the codebooks frozen.
inline EvalResult evaluate(Network& network, const ModelParams& params, const GraphDataset& ds,
                           std::span<const std::size_t> indices, const ForwardOptions& opt = {}) {
    EvalResult out;
    if (indices.empty()) return out;
    const auto blocks = params.column_blocks();
    std::size_t correct = 0;
    detail::for_chunks(ds, indices, detail::kEvalChunk, [&](auto idx, auto graphs) {
        auto fw = network.forward(params, graphs, idx, opt);
        for (std::size_t k = 0; k < idx.size(); ++k) {
            const auto logits = mlp_forward(params.mlp, pool_sum(fw[k].features));
            const auto y = ds.labels[idx[k]];
            out.loss += cross_entropy(logits, y);
            for (auto [off, width] : blocks) out.jsd += jsd_loss(fw[k].features.middleCols(off, width));
            const auto pred = predict(logits);
            out.predictions.push_back(pred);
            correct += pred == y;
        }
    });
    const auto n = static_cast<double>(indices.size());
    out.loss /= n;
    out.jsd /= n;
    out.accuracy = static_cast<double>(correct) / n;
    return out;
}

inline EvalResult evaluate(const ModelParams& params, const GraphDataset& ds, std::span<const std::size_t> indices) {
    Network network(params.net);
    return evaluate(network, params, ds, indices);
}

// ---------------------------------------------------------------------------
// Training

/// Everything known about one DRD step, passed to TrainHooks::on_drd.
struct DrdEvent {
    std::size_t step = 0; // global batch counter
    std::size_t layer = 0;
    std::size_t bank = 0;
    std::size_t mask = 0; // index within the bank
    EditPhase phase = EditPhase::edge;
    const DrdOutcome* outcome = nullptr;
    const StructuralMask* mask_after = nullptr;
};

struct TrainHooks {
    std::function<void(const DrdEvent&)> on_drd;
    std::function<void(const EpochStats&, const ModelParams&)> on_epoch;
    /// When set, one CSV row per DRD step: step,layer,mask,phase,estimate,accepted.
    std::ostream* acceptance_log = nullptr;
};

struct TrainResult {
    ModelParams params; // best-validation checkpoint
    RunReport report;
};

namespace detail {

/// Initial codebooks fitted on every training graph, layer by layer.
inline void init_codebooks(Network& network, ModelParams& params, const GraphDataset& ds,
                           std::span<const std::size_t> train, Rng& kmeans_rng) {
    if (params.codebooks.empty() || train.empty()) return;
    std::vector<const LabeledGraph*> graphs;
    for (auto i : train) graphs.push_back(&ds.graphs[i]);
    ForwardOptions opt;
    opt.fit_codebooks = &params.codebooks;
    opt.kmeans_rng = &kmeans_rng;
    network.forward(params, graphs, train, opt);
}

/// Runs the DRD step of every mask against the batch's per-node gradients.
inline void drd_batch(Network& network, ModelParams& params, const std::vector<GraphForward>& fw,
                      const BackwardResult& br, std::size_t step, Rng& rng, const AdamHyper& hyper,
                      const TrainHooks& hooks, std::size_t& proposed, std::size_t& accepted) {
    const EditPhase phase = step % 2 == 0 ? EditPhase::edge : EditPhase::label;
    std::vector<const Embedding*> egos;
    std::vector<double> before, after, grads;
    for (std::size_t l = 0; l < params.banks.size(); ++l) {
        std::size_t index_in_layer = 0;
        for (std::size_t b = 0; b < params.banks[l].size(); ++b) {
            const auto& cfg = params.net.layers[l][b];
            auto& kernel = network.kernel(l, b);
            const auto offset = static_cast<Eigen::Index>(params.column_offset(l, b));
            egos.clear();
            for (const auto& g : fw)
                for (const auto& e : *g.egos[l][b]) egos.push_back(&e);
            for (std::size_t i = 0; i < params.banks[l][b].masks.size(); ++i, ++index_in_layer) {
                const auto col = offset + static_cast<Eigen::Index>(i);
                before.clear();
                grads.clear();
                for (std::size_t g = 0; g < fw.size(); ++g)
                    for (Eigen::Index v = 0; v < fw[g].features.rows(); ++v) {
                        before.push_back(fw[g].features(v, col));
                        grads.push_back(br.feature_grads[g](v, col));
                    }
                auto& mask = params.banks[l][b].masks[i];
                auto score = [&](const StructuralMask& cand) {
                    const auto emb = kernel.embed(cand.graph());
                    after.resize(egos.size());
                    for (std::size_t v = 0; v < egos.size(); ++v)
                        after[v] = kernel_value(emb, *egos[v], cfg.kernel.normalized);
                    return estimate_subgradient(before, after, grads);
                };
                const auto outcome = drd_step(mask, phase, rng, score, hyper);
                if (outcome.op) {
                    ++proposed;
                    accepted += outcome.accepted;
                }
                if (hooks.on_drd) hooks.on_drd({step, l, b, i, phase, &outcome, &mask});
                if (hooks.acceptance_log && outcome.op)
                    *hooks.acceptance_log << step << ',' << l << ',' << index_in_layer << ',' << to_string(phase)
                                          << ',' << format_double(outcome.estimate) << ',' << outcome.accepted
                                          << '\n';
            }
        }
    }
}

} // namespace detail

/// Mini-batch training on `train`, early-stopped on the mean validation
/// cross-entropy (the training loss when `val` is empty). Each batch: forward
/// (refitting the codebooks), CE + w * JSD backward, one Adam step of the
/// MLP, then one DRD step per mask, layer by layer in index order. Returns the
/// parameters of the best validation epoch.
inline TrainResult train(const GraphDataset& ds, std::span<const std::size_t> train_idx,
                         std::span<const std::size_t> val_idx, const NetworkConfig& net, const TrainConfig& cfg,
                         const TrainHooks& hooks = {}) {
    cfg.validate();
    net.validate();
    if (net.num_classes < ds.num_classes) throw InputError("network has fewer classes than the dataset");
    if (train_idx.empty()) throw InputError("train: empty training split");
    if (hooks.acceptance_log) *hooks.acceptance_log << "step,layer,mask,phase,estimate,accepted\n";

    ModelParams params = ModelParams::init(net, cfg.seed);
    Network network(net);
    auto kmeans_rng = make_rng(cfg.seed, "kmeans");
    auto drd_rng = make_rng(cfg.seed, "drd");
    detail::init_codebooks(network, params, ds, train_idx, kmeans_rng);
    const auto blocks = params.column_blocks();
    const AdamHyper mlp_hyper{cfg.mlp_lr};
    const AdamHyper prob_hyper{cfg.prob_lr};

    TrainResult best{params, {}};
    RunReport& report = best.report;
    {
        const auto v = evaluate(network, params, ds, val_idx.empty() ? train_idx : val_idx);
        report.best_val_loss = v.loss;
        report.best_val_acc = v.accuracy;
    }

    std::vector<std::size_t> order(train_idx.begin(), train_idx.end());
    std::size_t step = 0;
    std::size_t since_best = 0;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        auto batch_rng = make_rng(cfg.seed, "batches", epoch);
        shuffle_range(order.begin(), order.end(), batch_rng);
        double loss_sum = 0.0;
        std::size_t correct = 0, proposed = 0, accepted = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const auto n = std::min(cfg.batch_size, order.size() - start);
            std::span<const std::size_t> idx(order.data() + start, n);
            std::vector<const LabeledGraph*> graphs;
            for (auto i : idx) graphs.push_back(&ds.graphs[i]);
            ForwardOptions opt;
            opt.fit_codebooks = &params.codebooks;
            opt.kmeans_rng = &kmeans_rng;
            const auto fw = network.forward(params, graphs, idx, opt);
            std::vector<HeadExample> examples;
            for (std::size_t k = 0; k < n; ++k) examples.push_back({&fw[k].features, ds.labels[idx[k]]});
            const auto br = backward(params.mlp, examples, blocks, cfg.jsd_weight);
            if (!std::isfinite(br.loss.total)) {
                report.diverged = true;
                break;
            }
            loss_sum += br.loss.cross_entropy * static_cast<double>(n);
            for (std::size_t k = 0; k < n; ++k) correct += predict(br.logits[k]) == examples[k].label;
            mlp_update(params.mlp, br.mlp, mlp_hyper);
            if (cfg.learn_masks)
                detail::drd_batch(network, params, fw, br, step, drd_rng, prob_hyper, hooks, proposed, accepted);
            ++step;
        }
        if (report.diverged) break;
        report.edits_proposed += proposed;
        report.edits_accepted += accepted;

        EpochStats st;
        st.epoch = epoch;
        st.train_loss = loss_sum / static_cast<double>(order.size());
        st.train_acc = static_cast<double>(correct) / static_cast<double>(order.size());
        const auto v = evaluate(network, params, ds, val_idx.empty() ? train_idx : val_idx);
        st.val_loss = v.loss;
        st.val_acc = v.accuracy;
        st.edit_accept_rate = proposed ? static_cast<double>(accepted) / static_cast<double>(proposed) : 0.0;
        st.sec_per_epoch = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        report.epochs.push_back(st);
        if (hooks.on_epoch) hooks.on_epoch(st, params);
        if (!std::isfinite(st.val_loss)) {
            report.diverged = true;
            break;
        }
        if (st.val_loss < report.best_val_loss) {
            report.best_val_loss = st.val_loss;
            report.best_val_acc = st.val_acc;
            report.best_epoch = epoch;
            best.params = params;
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            report.stopped_early = true;
            break;
        }
    }
    for (const auto& cb : params.codebooks) report.codebook_displacement.push_back(cb.last_displacement);
    return best;
}

/// Trains on split.train/val and scores the returned checkpoint on split.test.
inline TrainResult run_split(const GraphDataset& ds, const Split& split, const NetworkConfig& net,
                             const TrainConfig& cfg, const TrainHooks& hooks = {}) {
    auto result = train(ds, split.train, split.val, net, cfg, hooks);
    const auto t = evaluate(result.params, ds, split.test);
    result.report.test_loss = t.loss;
    result.report.test_accuracy = split.test.empty() ? std::numeric_limits<double>::quiet_NaN() : t.accuracy;
    return result;
}

// ---------------------------------------------------------------------------
// Network construction helpers

/// Single-bank layers of identical shape. The quantiser between layers gets
/// `default_quantizer_k` clusters of the input dictionary.
inline NetworkConfig make_network(std::size_t depth, const LayerConfig& base, const GraphDataset& ds,
                                  Activation act = Activation::relu) {
    return NetworkConfig::uniform(depth, base, ds.dictionary, default_quantizer_k(ds.dictionary),
                                  std::max<std::size_t>(ds.num_classes, 2), act);
}

// ---------------------------------------------------------------------------
// Parallel orchestration

/// Runs fn(0..n-1) on up to `jobs` threads. The first exception is rethrown.
inline void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
    jobs = std::max<std::size_t>(1, std::min(jobs, n));
    if (jobs == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> threads;
    for (std::size_t t = 0; t < jobs; ++t)
        threads.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    for (auto& t : threads) t.join();
    if (error) std::rethrow_exception(error);
}

inline double mean(std::span<const double> xs) {
    if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

/// Standard error of the mean (sample standard deviation / sqrt(n)).
inline double standard_error(std::span<const double> xs) {
    if (xs.size() < 2) return 0.0;
    const double m = mean(xs);
    double ss = 0.0;
    for (double x : xs) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(xs.size() - 1)) / std::sqrt(static_cast<double>(xs.size()));
}

struct CvResult {
    std::vector<double> fold_accuracy;
    std::vector<RunReport> reports;
    double mean_accuracy = 0.0;
    double stderr_accuracy = 0.0;
};

/// Seed of fold f's training run.
inline std::uint64_t fold_seed(std::uint64_t seed, std::size_t fold) { return derive_seed(seed, "fold", fold); }

/// k-fold protocol: train per fold, report mean accuracy and standard error.
inline CvResult cross_validate(const GraphDataset& ds, const NetworkConfig& net, const TrainConfig& cfg,
                               std::size_t folds = 10, std::size_t jobs = 1,
                               std::vector<std::string>* warnings = nullptr) {
    const auto splits = split_kfold(ds, folds, cfg.seed, warnings);
    CvResult out;
    out.fold_accuracy.resize(folds);
    out.reports.resize(folds);
    parallel_for(folds, jobs, [&](std::size_t f) {
        TrainConfig c = cfg;
        c.seed = fold_seed(cfg.seed, f);
        auto r = run_split(ds, splits[f], net, c);
        out.fold_accuracy[f] = r.report.test_accuracy;
        out.reports[f] = std::move(r.report);
    });
    out.mean_accuracy = mean(out.fold_accuracy);
    out.stderr_accuracy = standard_error(out.fold_accuracy);
    return out;
}

inline void write_cv_csv(std::ostream& os, const CvResult& cv) {
    os << "fold,test_accuracy,best_epoch,best_val_loss,best_val_acc\n";
    for (std::size_t f = 0; f < cv.fold_accuracy.size(); ++f)
        os << f << ',' << format_double(cv.fold_accuracy[f]) << ',' << cv.reports[f].best_epoch << ','
           << format_double(cv.reports[f].best_val_loss) << ',' << format_double(cv.reports[f].best_val_acc) << '\n';
    os << "mean," << format_double(cv.mean_accuracy) << ",,,\n";
    os << "stderr," << format_double(cv.stderr_accuracy) << ",,,\n";
}

// ---------------------------------------------------------------------------
// Grid search

struct GridPoint {
    std::size_t masks = 16;
    std::size_t nodes = 6;
    std::size_t radius = 3;
    std::size_t layers = 1;
    bool operator==(const GridPoint&) const = default;
};

struct GridSpec {
    std::vector<std::size_t> masks{8, 16, 32};
    std::vector<std::size_t> nodes{6, 8};
    std::vector<std::size_t> radius{1, 2, 3};
    std::vector<std::size_t> layers{1, 2, 3};

    void validate() const {
        if (masks.empty() || nodes.empty() || radius.empty() || layers.empty())
            throw InputError("grid: every hyper-parameter list must be non-empty");
    }

    std::size_t size() const { return masks.size() * nodes.size() * radius.size() * layers.size(); }

    /// Cartesian product, masks varying slowest.
    std::vector<GridPoint> enumerate() const {
        std::vector<GridPoint> out;
        for (auto m : masks)
            for (auto n : nodes)
                for (auto r : radius)
                    for (auto l : layers) out.push_back({m, n, r, l});
        return out;
    }
};

/// The full grid, or `sample` distinct points drawn uniformly (kept in grid
/// order). A sample at least as large as the grid returns the full grid.
inline std::vector<GridPoint> select_grid(const GridSpec& spec, std::optional<std::size_t> sample, std::uint64_t seed) {
    spec.validate();
    auto all = spec.enumerate();
    if (!sample || *sample >= all.size()) return all;
    auto rng = make_rng(seed, "grid");
    std::vector<std::size_t> idx(all.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    for (std::size_t k = 0; k < *sample; ++k) std::swap(idx[k], idx[k + uniform_index(rng, idx.size() - k)]);
    idx.resize(*sample);
    std::sort(idx.begin(), idx.end());
    std::vector<GridPoint> out;
    for (auto i : idx) out.push_back(all[i]);
    return out;
}

struct LeaderboardEntry {
    GridPoint point;
    double mean_val_acc = 0.0;
    double mean_val_loss = 0.0;
    double mean_test_acc = 0.0;
    std::vector<double> fold_val_acc, fold_val_loss, fold_test_acc;
};

struct GridResult {
    std::vector<LeaderboardEntry> leaderboard; // best first
    GridPoint best;
    /// Per fold: test accuracy of the point with the best validation accuracy on that fold.
    std::vector<double> protocol_fold_test;
    double protocol_mean = 0.0;
    double protocol_stderr = 0.0;
};

/// Evaluates every selected grid point on every fold. Points are ranked by
/// mean validation accuracy (ties: lower mean validation loss, then grid
/// order); the protocol accuracy picks the best-validation point per fold.
inline GridResult grid_search(const GraphDataset& ds, const GridSpec& spec, const LayerConfig& base,
                              Activation act, const TrainConfig& cfg, std::optional<std::size_t> sample,
                              std::size_t folds = 10, std::size_t jobs = 1) {
    const auto points = select_grid(spec, sample, cfg.seed);
    const auto splits = split_kfold(ds, folds, cfg.seed);
    std::vector<LeaderboardEntry> entries(points.size());
    for (std::size_t p = 0; p < points.size(); ++p) {
        entries[p].point = points[p];
        entries[p].fold_val_acc.resize(folds);
        entries[p].fold_val_loss.resize(folds);
        entries[p].fold_test_acc.resize(folds);
    }
    parallel_for(points.size() * folds, jobs, [&](std::size_t job) {
        const auto p = job / folds, f = job % folds;
        LayerConfig layer = base;
        layer.num_masks = points[p].masks;
        layer.max_mask_nodes = points[p].nodes;
        layer.radius = points[p].radius;
        const auto net = make_network(points[p].layers, layer, ds, act);
        TrainConfig c = cfg;
        c.seed = fold_seed(cfg.seed, f);
        const auto r = run_split(ds, splits[f], net, c);
        entries[p].fold_val_acc[f] = r.report.best_val_acc;
        entries[p].fold_val_loss[f] = r.report.best_val_loss;
        entries[p].fold_test_acc[f] = r.report.test_accuracy;
    });
    GridResult out;
    for (auto& e : entries) {
        e.mean_val_acc = mean(e.fold_val_acc);
        e.mean_val_loss = mean(e.fold_val_loss);
        e.mean_test_acc = mean(e.fold_test_acc);
    }
    for (std::size_t f = 0; f < folds; ++f) {
        std::size_t best = 0;
        for (std::size_t p = 1; p < entries.size(); ++p) {
            const auto& a = entries[p];
            const auto& b = entries[best];
            if (a.fold_val_acc[f] > b.fold_val_acc[f] ||
                (a.fold_val_acc[f] == b.fold_val_acc[f] && a.fold_val_loss[f] < b.fold_val_loss[f]))
                best = p;
        }
        out.protocol_fold_test.push_back(entries[best].fold_test_acc[f]);
    }
    out.protocol_mean = mean(out.protocol_fold_test);
    out.protocol_stderr = standard_error(out.protocol_fold_test);
    std::stable_sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
        if (a.mean_val_acc != b.mean_val_acc) return a.mean_val_acc > b.mean_val_acc;
        return a.mean_val_loss < b.mean_val_loss;
    });
    out.leaderboard = std::move(entries);
    out.best = out.leaderboard.front().point;
    return out;
}

inline void write_leaderboard_csv(std::ostream& os, const GridResult& g) {
    os << "rank,masks,nodes,radius,layers,mean_val_acc,mean_val_loss,mean_test_acc\n";
    for (std::size_t i = 0; i < g.leaderboard.size(); ++i) {
        const auto& e = g.leaderboard[i];
        os << i + 1 << ',' << e.point.masks << ',' << e.point.nodes << ',' << e.point.radius << ',' << e.point.layers
           << ',' << format_double(e.mean_val_acc) << ',' << format_double(e.mean_val_loss) << ','
           << format_double(e.mean_test_acc) << '\n';
    }
}

// ---------------------------------------------------------------------------
// Mask analysis

struct MaskSignificance {
    std::size_t layer = 0, bank = 0, mask = 0;
    std::size_t column = 0; // index into the concatenated features
    double increase = 0.0;  // mean CE with the mask zeroed minus mean CE
};

/// Loss increase when each mask's response column is zeroed everywhere
/// (before pooling and before the next quantiser), sorted by decreasing
/// increase (ties: column order).
inline std::vector<MaskSignificance> mask_significance(const ModelParams& params, const GraphDataset& ds,
                                                       std::span<const std::size_t> indices) {
    Network network(params.net);
    const double baseline = evaluate(network, params, ds, indices).loss;
    std::vector<MaskSignificance> out;
    for (std::size_t l = 0; l < params.banks.size(); ++l)
        for (std::size_t b = 0; b < params.banks[l].size(); ++b)
            for (std::size_t i = 0; i < params.banks[l][b].masks.size(); ++i) {
                MaskSignificance s{l, b, i, params.column_offset(l, b) + i, 0.0};
                ForwardOptions opt;
                opt.zeroed_columns = {s.column};
                s.increase = evaluate(network, params, ds, indices, opt).loss - baseline;
                out.push_back(s);
            }
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.increase > b.increase; });
    return out;
}

inline void write_significance_csv(std::ostream& os, std::span<const MaskSignificance> sig) {
    os << "rank,layer,bank,mask,column,loss_increase\n";
    for (std::size_t r = 0; r < sig.size(); ++r)
        os << r + 1 << ',' << sig[r].layer << ',' << sig[r].bank << ',' << sig[r].mask << ',' << sig[r].column << ','
           << format_double(sig[r].increase) << '\n';
}

/// Eight-step viridis scale, dark to light.
inline const std::vector<std::string>& viridis8() {
    static const std::vector<std::string> palette{"#440154", "#46327e", "#365c8d", "#277f8e",
                                                  "#1fa187", "#4ac16d", "#a0da39", "#fde725"};
    return palette;
}

/// Bucket of `x` on an 8-step scale from `lo` to `hi`; `hi` maps to the last.
inline std::size_t color_bucket(double x, double lo, double hi) {
    if (!(hi > lo)) return 7;
    const double t = (x - lo) / (hi - lo);
    return std::min<std::size_t>(7, static_cast<std::size_t>(std::max(0.0, std::floor(t * 8.0))));
}

inline std::string mask_file_stem(std::size_t layer, std::size_t bank, std::size_t mask) {
    return "mask_l" + std::to_string(layer) + "_b" + std::to_string(bank) + "_m" + std::to_string(mask);
}

/// Writes `<stem>.dot` for every mask graph and `<stem>_top.dot` for the
/// graph among `indices` holding the node with the highest response to it,
/// nodes colored by their response (min..max within that graph). Deeper
/// layers show their quantised input labels. A non-empty `columns` restricts
/// the export to those feature columns. Returns the written paths.
inline std::vector<std::filesystem::path> export_masks(const ModelParams& params, const GraphDataset& ds,
                                                       std::span<const std::size_t> indices,
                                                       const std::filesystem::path& out_dir,
                                                       std::span<const std::size_t> columns = {}) {
    std::filesystem::create_directories(out_dir);
    std::vector<std::filesystem::path> written;
    auto open = [&](const std::string& name) {
        written.push_back(out_dir / name);
        std::ofstream os(written.back());
        if (!os) throw LoadError(written.back().string(), 0, "cannot write file");
        return os;
    };
    const auto total = params.net.total_masks();
    std::vector<double> best(total, -std::numeric_limits<double>::infinity());
    std::vector<std::size_t> best_graph(total, 0);
    Network network(params.net);
    detail::for_chunks(ds, indices, detail::kEvalChunk, [&](auto idx, auto graphs) {
        const auto fw = network.forward(params, graphs, idx);
        for (std::size_t k = 0; k < idx.size(); ++k)
            for (std::size_t c = 0; c < total; ++c) {
                const double m = fw[k].features.col(static_cast<Eigen::Index>(c)).maxCoeff();
                if (m > best[c]) {
                    best[c] = m;
                    best_graph[c] = idx[k];
                }
            }
    });
    for (std::size_t l = 0; l < params.banks.size(); ++l)
        for (std::size_t b = 0; b < params.banks[l].size(); ++b)
            for (std::size_t i = 0; i < params.banks[l][b].masks.size(); ++i) {
                const auto c = params.column_offset(l, b) + i;
                if (!columns.empty() && std::find(columns.begin(), columns.end(), c) == columns.end()) continue;
                const auto stem = mask_file_stem(l, b, i);
                {
                    auto os = open(stem + ".dot");
                    write_dot(os, params.banks[l][b].masks[i].graph());
                }
                if (indices.empty()) continue;
                const LabeledGraph* g = &ds.graphs[best_graph[c]];
                std::size_t key = best_graph[c];
                const auto fw = network.forward(params, std::span<const LabeledGraph* const>(&g, 1),
                                                std::span<const std::size_t>(&key, 1));
                const auto col = fw[0].features.col(static_cast<Eigen::Index>(c));
                std::vector<std::string> colors;
                for (Eigen::Index v = 0; v < col.size(); ++v)
                    colors.push_back(viridis8()[color_bucket(col(v), col.minCoeff(), col.maxCoeff())]);
                auto os = open(stem + "_top.dot");
                write_dot(os, fw[0].layer_inputs[l], std::span<const std::string>(colors));
            }
    return written;
}

// ---------------------------------------------------------------------------
// Expressiveness

struct ExpressivenessCheck {
    std::string name;
    bool passed = false;
    std::string detail;
};

struct ExpressivenessReport {
    std::vector<ExpressivenessCheck> checks;
    bool passed() const {
        return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
    }
};

/// Rows of x sorted lexicographically: the per-node response multiset.
inline std::vector<std::vector<double>> sorted_rows(const NodeFeatures& x) {
    std::vector<std::vector<double>> rows;
    for (Eigen::Index v = 0; v < x.rows(); ++v) {
        std::vector<double> r(static_cast<std::size_t>(x.cols()));
        for (Eigen::Index i = 0; i < x.cols(); ++i) r[static_cast<std::size_t>(i)] = x(v, i);
        rows.push_back(std::move(r));
    }
    std::sort(rows.begin(), rows.end());
    return rows;
}

/// Largest difference between the node-response multisets of two graphs
/// (infinite when the node counts differ).
inline double feature_gap(const NodeFeatures& a, const NodeFeatures& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) return std::numeric_limits<double>::infinity();
    const auto ra = sorted_rows(a), rb = sorted_rows(b);
    double gap = 0.0;
    for (std::size_t v = 0; v < ra.size(); ++v)
        for (std::size_t i = 0; i < ra[v].size(); ++i) gap = std::max(gap, std::abs(ra[v][i] - rb[v][i]));
    return gap;
}

/// Triangle-detection checks for a single GKC layer with radius 1 and two
/// fixed masks (a triangle and a 3-node star), using `kernel` normalised.
inline ExpressivenessReport expressiveness_report(KernelConfig kernel) {
    kernel.normalized = true;
    kernel.validate();
    LayerConfig layer;
    layer.num_masks = 2;
    layer.max_mask_nodes = 4;
    layer.radius = 1;
    layer.kernel = kernel;
    layer.input_dictionary = LabelDictionary{1};
    const LabeledGraph k3({0, 0, 0}, {{0, 1}, {1, 2}, {0, 2}});
    const LabeledGraph star({0, 0, 0, 0}, {{0, 1}, {0, 2}, {0, 3}});
    const std::vector<StructuralMask> masks{StructuralMask::from_graph(k3, 1, 1),
                                            StructuralMask::from_graph(star, 1)};
    auto features = [&](const LabeledGraph& g) { return gkc_forward(layer, masks, g); };
    const double tol = 1e-6;
    ExpressivenessReport rep;
    auto check_pair = [&](const std::string& name, const LabeledGraph& a, const LabeledGraph& b, bool expect_wl_same,
                          bool expect_gkc_differs) {
        const bool wl_same = wl_indistinguishable(a, b);
        const double gap = feature_gap(features(a), features(b));
        const bool gkc_differs = gap > tol;
        rep.checks.push_back({name + ": wl_indistinguishable", wl_same == expect_wl_same,
                              std::string("wl_indistinguishable=") + (wl_same ? "true" : "false")});
        rep.checks.push_back({name + ": gkc features " + (expect_gkc_differs ? "differ" : "equal"),
                              gkc_differs == expect_gkc_differs, "max gap " + format_double(gap)});
    };

    std::vector<Edge> tri2{{0, 1}, {1, 2}, {0, 2}, {3, 4}, {4, 5}, {3, 5}};
    std::vector<Edge> c6{{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}, {0, 5}};
    const LabeledGraph two_triangles(std::vector<Label>(6, 0), tri2);
    const LabeledGraph hexagon(std::vector<Label>(6, 0), c6);
    check_pair("2xC3 vs C6", two_triangles, hexagon, true, true);

    const LabeledGraph p3({0, 0, 0}, {{0, 1}, {1, 2}});
    check_pair("K3 vs P3", k3, p3, false, true);

    const LabeledGraph g({0, 0, 0, 0, 0}, {{0, 1}, {1, 2}, {2, 0}, {2, 3}, {3, 4}});
    const std::vector<NodeId> perm{3, 0, 4, 1, 2};
    check_pair("isomorphic pair", g, permute(g, perm), true, false);
    return rep;
}

} // namespace gkc

#endif // GKC_EXPERIMENT_HPP
