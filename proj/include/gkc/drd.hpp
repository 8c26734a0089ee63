#ifndef GKC_DRD_HPP
#define GKC_DRD_HPP

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gkc/adam.hpp"
#include "gkc/kernels.hpp"
#include "gkc/mask.hpp"

namespace gkc {

// Discrete Randomized Descent: propose one graph edit for a mask, score it with
// the chain-rule estimate sum_v dL/dx(v) * (K(M', N_v) - K(M, N_v)), keep it
// iff the estimate is <= 0, and nudge the edit distribution with the same
// estimate as the gradient of the proposed operation's probability.

enum class EditPhase { edge, label };

inline const char* to_string(EditPhase p) { return p == EditPhase::edge ? "edge" : "label"; }

struct EditOperation {
    enum class Kind { add_edge, remove_edge, relabel };
    Kind kind = Kind::add_edge;
    NodeId a = 0; // slot (or first endpoint)
    NodeId b = 0; // second endpoint, edge edits only
    Label label = 0;

    bool operator==(const EditOperation&) const = default;
};

inline std::string to_string(const EditOperation& e) {
    switch (e.kind) {
    case EditOperation::Kind::add_edge: return "add(" + std::to_string(e.a) + "," + std::to_string(e.b) + ")";
    case EditOperation::Kind::remove_edge: return "remove(" + std::to_string(e.a) + "," + std::to_string(e.b) + ")";
    case EditOperation::Kind::relabel: return "relabel(" + std::to_string(e.a) + "->" + std::to_string(e.label) + ")";
    }
    return "?";
}

struct WeightedEdit {
    EditOperation op;
    double weight;
};

/// Legal edits of the given phase with their unnormalised weights.
///
/// Edge phase: every slot pair touching the mask graph; absent pairs are
/// "add" with weight p(e), present ones "remove" with weight 1 - p(e).
/// Label phase: every (mask node, other label) with weight p(l_i = label).
inline std::vector<WeightedEdit> edit_candidates(const StructuralMask& mask, EditPhase phase) {
    std::vector<WeightedEdit> out;
    const auto& ep = mask.probs;
    const auto d = static_cast<NodeId>(mask.max_nodes());
    if (phase == EditPhase::edge) {
        for (NodeId i = 0; i < d; ++i)
            for (NodeId j = i + 1; j < d; ++j) {
                if (!mask.is_active(i) && !mask.is_active(j)) continue;
                const double p = ep.edge_prob(i, j);
                if (mask.has_slot_edge(i, j)) out.push_back({{EditOperation::Kind::remove_edge, i, j, 0}, 1.0 - p});
                else out.push_back({{EditOperation::Kind::add_edge, i, j, 0}, p});
            }
    } else {
        for (NodeId s : mask.active_slots()) {
            const auto probs = ep.label_probs(s);
            for (Label l = 0; l < ep.dict_size(); ++l)
                if (l != mask.slot_label(s))
                    out.push_back({{EditOperation::Kind::relabel, s, 0, l}, probs(static_cast<Eigen::Index>(l))});
        }
    }
    return out;
}

/// Draws one edit; nullopt when the phase has no legal edit (e.g. a single
/// slot in the edge phase). Weights are renormalised over the positive ones.
inline std::optional<EditOperation> sample_edit(const StructuralMask& mask, EditPhase phase, Rng& rng) {
    auto cands = edit_candidates(mask, phase);
    double total = 0.0;
    for (const auto& c : cands)
        if (c.weight > 0.0) total += c.weight;
    if (total <= 0.0) return std::nullopt;
    double r = uniform01(rng) * total;
    const EditOperation* last = nullptr;
    for (const auto& c : cands) {
        if (c.weight <= 0.0) continue;
        last = &c.op;
        if (r < c.weight) return c.op;
        r -= c.weight;
    }
    return *last;
}

inline StructuralMask apply_edit(const StructuralMask& mask, const EditOperation& e) {
    StructuralMask out = mask;
    auto edges = mask.slot_graph().edges();
    std::vector<Label> labels(mask.max_nodes());
    for (NodeId s = 0; s < labels.size(); ++s) labels[s] = mask.slot_label(s);
    const Edge pair{std::min(e.a, e.b), std::max(e.a, e.b)};
    switch (e.kind) {
    case EditOperation::Kind::add_edge:
        if (mask.has_slot_edge(e.a, e.b)) throw InputError("apply_edit: edge already present");
        edges.push_back(pair);
        break;
    case EditOperation::Kind::remove_edge:
        if (!mask.has_slot_edge(e.a, e.b)) throw InputError("apply_edit: edge not present");
        std::erase(edges, pair);
        break;
    case EditOperation::Kind::relabel:
        if (e.label >= mask.probs.dict_size()) throw InputError("apply_edit: label outside dictionary");
        labels[e.a] = e.label;
        break;
    }
    out.set_slots(std::move(labels), edges);
    return out;
}

/// Adam step on the logits of the phase's distribution, treating `estimate`
/// as d loss / d p(op).
inline void update_edit_probabilities(EditProbabilities& ep, const EditOperation& op, double estimate,
                                      const AdamHyper& hyper) {
    if (op.kind == EditOperation::Kind::relabel) {
        Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(ep.label_logits.rows(), ep.label_logits.cols());
        const auto probs = ep.label_probs(op.a);
        const double p_op = probs(static_cast<Eigen::Index>(op.label));
        for (Eigen::Index k = 0; k < probs.size(); ++k)
            grad(op.a, k) = estimate * p_op * ((k == static_cast<Eigen::Index>(op.label) ? 1.0 : 0.0) - probs(k));
        ep.label_adam.apply(ep.label_logits, grad, hyper);
    } else {
        Eigen::VectorXd grad = Eigen::VectorXd::Zero(ep.edge_logits.size());
        const double p = ep.edge_prob(op.a, op.b);
        const double slope = p * (1.0 - p);
        // add has probability p(e), remove has 1 - p(e)
        const double sign = op.kind == EditOperation::Kind::add_edge ? 1.0 : -1.0;
        grad(static_cast<Eigen::Index>(pair_index(op.a, op.b, ep.slots()))) = sign * estimate * slope;
        ep.edge_adam.apply(ep.edge_logits, grad, hyper);
    }
}

/// Chain-rule estimate from precomputed responses: sum_v g_v (after_v - before_v).
inline double estimate_subgradient(std::span<const double> before, std::span<const double> after,
                                   std::span<const double> grads) {
    if (before.size() != after.size() || before.size() != grads.size())
        throw InputError("estimate_subgradient: length mismatch");
    double s = 0.0;
    for (std::size_t v = 0; v < grads.size(); ++v) s += grads[v] * (after[v] - before[v]);
    return s;
}

/// One node of a DRD batch: its ego-subgraph and d loss / d x_i(v).
struct DrdBatchItem {
    const EgoSubgraph* ego = nullptr;
    double grad = 0.0;
};

/// Reference estimate straight from graphs (one shared kernel instance).
inline double estimate_subgradient(const StructuralMask& before, const StructuralMask& after,
                                   std::span<const DrdBatchItem> batch, const KernelConfig& cfg) {
    auto kernel = make_kernel(cfg);
    const auto eb = kernel->embed(before.graph());
    const auto ea = kernel->embed(after.graph());
    double s = 0.0;
    for (const auto& item : batch) {
        if (item.grad == 0.0) continue;
        const auto en = kernel->embed(item.ego->graph);
        s += item.grad * (kernel_value(ea, en, cfg.normalized) - kernel_value(eb, en, cfg.normalized));
    }
    return s;
}

struct DrdOutcome {
    std::optional<EditOperation> op;
    double estimate = 0.0;
    bool accepted = false;
};

/// Scores a candidate mask; returns the subgradient estimate for moving to it.
using EditScorer = std::function<double(const StructuralMask& candidate)>;

/// Samples, scores and (iff estimate <= 0) applies one edit in place. The
/// probability logits are updated whether or not the edit is kept.
inline DrdOutcome drd_step(StructuralMask& mask, EditPhase phase, Rng& rng, const EditScorer& score,
                           const AdamHyper& hyper) {
    DrdOutcome out;
    out.op = sample_edit(mask, phase, rng);
    if (!out.op) return out;
    StructuralMask candidate = apply_edit(mask, *out.op);
    out.estimate = score(candidate);
    out.accepted = out.estimate <= 0.0;
    update_edit_probabilities(mask.probs, *out.op, out.estimate, hyper);
    if (out.accepted) {
        auto probs = std::move(mask.probs);
        mask = std::move(candidate);
        mask.probs = std::move(probs);
    }
    return out;
}

inline DrdOutcome drd_step(StructuralMask& mask, std::span<const DrdBatchItem> batch, const KernelConfig& cfg,
                           EditPhase phase, Rng& rng, const AdamHyper& hyper) {
    const StructuralMask before = mask;
    return drd_step(
        mask, phase, rng,
        [&](const StructuralMask& cand) { return estimate_subgradient(before, cand, batch, cfg); }, hyper);
}

} // namespace gkc

#endif // GKC_DRD_HPP
