#ifndef GKC_DATA_HPP
#define GKC_DATA_HPP

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "gkc/error.hpp"
#include "gkc/graph.hpp"
#include "gkc/rng.hpp"

namespace gkc {

/// Labelled graphs for classification. Class ids are 0..num_classes-1 and
/// node labels lie in `dictionary`.
struct GraphDataset {
    std::string name;
    std::vector<LabeledGraph> graphs;
    std::vector<std::size_t> labels;
    LabelDictionary dictionary;
    std::size_t num_classes = 0;

    std::size_t size() const noexcept { return graphs.size(); }

    std::vector<std::size_t> class_counts() const {
        std::vector<std::size_t> c(num_classes, 0);
        for (auto y : labels) ++c[y];
        return c;
    }

    double mean_nodes() const {
        if (graphs.empty()) return 0.0;
        double s = 0.0;
        for (const auto& g : graphs) s += static_cast<double>(g.num_nodes());
        return s / static_cast<double>(graphs.size());
    }

    void validate() const {
        if (graphs.size() != labels.size()) throw InputError("dataset: graphs and labels differ in length");
        for (std::size_t i = 0; i < graphs.size(); ++i) {
            if (graphs[i].empty()) throw InputError("dataset: graph " + std::to_string(i) + " has no nodes");
            if (labels[i] >= num_classes) throw InputError("dataset: class id out of range");
            check_labels(graphs[i], dictionary);
        }
    }
};

namespace detail {

inline std::vector<long long> parse_row(const std::string& line, const std::string& file, std::size_t lineno) {
    std::vector<long long> out;
    std::size_t pos = 0;
    while (pos <= line.size()) {
        auto end = line.find(',', pos);
        if (end == std::string::npos) end = line.size();
        std::string_view field(line.data() + pos, end - pos);
        while (!field.empty() && std::isspace(static_cast<unsigned char>(field.front()))) field.remove_prefix(1);
        while (!field.empty() && std::isspace(static_cast<unsigned char>(field.back()))) field.remove_suffix(1);
        long long v = 0;
        auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
        if (field.empty() || ec != std::errc() || ptr != field.data() + field.size())
            throw LoadError(file, lineno, "expected an integer, got '" + std::string(field) + "'");
        out.push_back(v);
        pos = end + 1;
    }
    return out;
}

/// Non-blank lines of a file, each parsed into exactly `width` integers.
inline std::vector<std::vector<long long>> read_table(const std::filesystem::path& path, std::size_t width) {
    std::ifstream in(path);
    if (!in) throw LoadError(path.string(), 0, "cannot open file");
    std::vector<std::vector<long long>> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        auto row = parse_row(line, path.string(), lineno);
        if (row.size() != width)
            throw LoadError(path.string(), lineno,
                            "expected " + std::to_string(width) + " values, got " + std::to_string(row.size()));
        rows.push_back(std::move(row));
    }
    return rows;
}

/// Sorted distinct values -> dense ids.
inline std::map<long long, std::size_t> dense_ids(const std::vector<long long>& values) {
    std::map<long long, std::size_t> ids;
    for (auto v : values) ids.emplace(v, 0);
    std::size_t next = 0;
    for (auto& [v, id] : ids) id = next++;
    return ids;
}

} // namespace detail

/// Reads the TUDataset text format from `dir`: `<name>_A.txt` (1-indexed
/// comma-separated edge list, either or both directions),
/// `<name>_graph_indicator.txt`, `<name>_graph_labels.txt` and the optional
/// `<name>_node_labels.txt`. Class and node labels are remapped to dense ids
/// by sorted original value; without node labels every node gets label 0.
/// Self-loops are dropped, each reported through `warnings` when given.
inline GraphDataset load_tudataset(const std::filesystem::path& dir, const std::string& name,
                                   std::vector<std::string>* warnings = nullptr) {
    const auto file = [&](const char* suffix) { return dir / (name + suffix); };
    const auto indicator_rows = detail::read_table(file("_graph_indicator.txt"), 1);
    const auto graph_label_rows = detail::read_table(file("_graph_labels.txt"), 1);
    const auto edge_path = file("_A.txt");
    const auto edge_rows = detail::read_table(edge_path, 2);
    const std::size_t num_nodes = indicator_rows.size();
    const std::size_t num_graphs = graph_label_rows.size();

    std::vector<long long> node_values(num_nodes, 0);
    if (std::filesystem::exists(file("_node_labels.txt"))) {
        const auto rows = detail::read_table(file("_node_labels.txt"), 1);
        if (rows.size() != num_nodes)
            throw LoadError(file("_node_labels.txt").string(), rows.size(),
                            "has " + std::to_string(rows.size()) + " rows but there are " +
                                std::to_string(num_nodes) + " nodes");
        for (std::size_t i = 0; i < num_nodes; ++i) node_values[i] = rows[i][0];
    }
    const auto node_ids = detail::dense_ids(node_values);

    std::vector<long long> class_values;
    for (const auto& r : graph_label_rows) class_values.push_back(r[0]);
    const auto class_ids = detail::dense_ids(class_values);

    // node -> (graph, local index)
    std::vector<std::size_t> graph_of(num_nodes), local(num_nodes);
    std::vector<std::vector<Label>> node_labels(num_graphs);
    for (std::size_t i = 0; i < num_nodes; ++i) {
        const long long gid = indicator_rows[i][0];
        if (gid < 1 || static_cast<std::size_t>(gid) > num_graphs)
            throw LoadError(file("_graph_indicator.txt").string(), i + 1,
                            "graph id " + std::to_string(gid) + " out of range 1.." + std::to_string(num_graphs));
        graph_of[i] = static_cast<std::size_t>(gid - 1);
        local[i] = node_labels[graph_of[i]].size();
        node_labels[graph_of[i]].push_back(static_cast<Label>(node_ids.at(node_values[i])));
    }

    std::vector<std::vector<Edge>> edges(num_graphs);
    for (std::size_t r = 0; r < edge_rows.size(); ++r) {
        const long long a = edge_rows[r][0], b = edge_rows[r][1];
        for (long long x : {a, b})
            if (x < 1 || static_cast<std::size_t>(x) > num_nodes)
                throw LoadError(edge_path.string(), r + 1,
                                "node id " + std::to_string(x) + " out of range 1.." + std::to_string(num_nodes));
        const auto u = static_cast<std::size_t>(a - 1), v = static_cast<std::size_t>(b - 1);
        if (graph_of[u] != graph_of[v])
            throw LoadError(edge_path.string(), r + 1, "edge joins nodes of different graphs");
        if (u == v) {
            if (warnings) warnings->push_back(edge_path.string() + ":" + std::to_string(r + 1) + ": self-loop dropped");
            continue;
        }
        edges[graph_of[u]].emplace_back(static_cast<NodeId>(local[u]), static_cast<NodeId>(local[v]));
    }

    GraphDataset ds;
    ds.name = name;
    ds.dictionary = LabelDictionary{node_ids.size()};
    ds.num_classes = class_ids.size();
    for (std::size_t g = 0; g < num_graphs; ++g) {
        if (node_labels[g].empty())
            throw LoadError(file("_graph_labels.txt").string(), g + 1, "graph has no nodes");
        ds.graphs.emplace_back(std::move(node_labels[g]), edges[g]);
        ds.labels.push_back(class_ids.at(class_values[g]));
    }
    return ds;
}

/// Writes `ds` in the TUDataset text format (both edge directions, ids as
/// stored). Loading the result gives back the same graphs.
inline void save_tudataset(const GraphDataset& ds, const std::filesystem::path& dir, const std::string& name) {
    std::filesystem::create_directories(dir);
    const auto open = [&](const char* suffix) {
        std::ofstream out(dir / (name + suffix));
        if (!out) throw LoadError((dir / (name + suffix)).string(), 0, "cannot write file");
        return out;
    };
    auto a = open("_A.txt");
    auto ind = open("_graph_indicator.txt");
    auto gl = open("_graph_labels.txt");
    auto nl = open("_node_labels.txt");
    std::size_t base = 1;
    for (std::size_t g = 0; g < ds.size(); ++g) {
        const auto& graph = ds.graphs[g];
        for (NodeId v = 0; v < graph.num_nodes(); ++v) {
            ind << g + 1 << '\n';
            nl << graph.label(v) << '\n';
        }
        for (auto [u, v] : graph.edges()) {
            a << base + u << ", " << base + v << '\n';
            a << base + v << ", " << base + u << '\n';
        }
        gl << ds.labels[g] << '\n';
        base += graph.num_nodes();
    }
}

// ---------------------------------------------------------------------------
// Motifs and synthetic datasets

enum class MotifKind { ring, wheel, grid, ladder, cliques };

inline std::string to_string(MotifKind k) {
    switch (k) {
    case MotifKind::ring: return "ring";
    case MotifKind::wheel: return "wheel";
    case MotifKind::grid: return "grid";
    case MotifKind::ladder: return "ladder";
    case MotifKind::cliques: return "cliques";
    }
    return "?";
}

inline MotifKind parse_motif_kind(const std::string& s) {
    for (auto k : {MotifKind::ring, MotifKind::wheel, MotifKind::grid, MotifKind::ladder, MotifKind::cliques})
        if (s == to_string(k)) return k;
    throw InputError("unknown motif '" + s + "' (expected ring, wheel, grid, ladder or cliques)");
}

/// `size`: ring/wheel rim length, grid rows, ladder rungs, clique size.
/// `size2`: grid columns (ignored otherwise).
struct MotifSpec {
    MotifKind kind = MotifKind::ring;
    std::size_t size = 6;
    std::size_t size2 = 3;

    static MotifSpec defaults(MotifKind k) {
        switch (k) {
        case MotifKind::ring: return {k, 6, 0};
        case MotifKind::wheel: return {k, 6, 0};
        case MotifKind::grid: return {k, 3, 3};
        case MotifKind::ladder: return {k, 4, 0};
        case MotifKind::cliques: return {k, 4, 0};
        }
        return {};
    }
};

inline std::string to_string(const MotifSpec& s) {
    std::string out = to_string(s.kind) + "(" + std::to_string(s.size);
    if (s.kind == MotifKind::grid) out += "x" + std::to_string(s.size2);
    return out + ")";
}

inline LabeledGraph make_motif(const MotifSpec& spec) {
    std::vector<Edge> e;
    const auto n = static_cast<NodeId>(spec.size);
    auto need = [&](std::size_t v, std::size_t min, const char* what) {
        if (v < min)
            throw InputError(to_string(spec.kind) + " motif needs " + what + " >= " + std::to_string(min));
    };
    std::size_t nodes = 0;
    switch (spec.kind) {
    case MotifKind::ring:
        need(spec.size, 3, "size");
        for (NodeId i = 0; i < n; ++i) e.emplace_back(i, (i + 1) % n);
        nodes = n;
        break;
    case MotifKind::wheel:
        need(spec.size, 3, "size");
        for (NodeId i = 0; i < n; ++i) {
            e.emplace_back(i, (i + 1) % n);
            e.emplace_back(i, n); // hub
        }
        nodes = n + 1;
        break;
    case MotifKind::grid: {
        need(spec.size, 2, "rows");
        need(spec.size2, 2, "columns");
        const auto cols = static_cast<NodeId>(spec.size2);
        for (NodeId r = 0; r < n; ++r)
            for (NodeId c = 0; c < cols; ++c) {
                if (c + 1 < cols) e.emplace_back(r * cols + c, r * cols + c + 1);
                if (r + 1 < n) e.emplace_back(r * cols + c, (r + 1) * cols + c);
            }
        nodes = spec.size * spec.size2;
        break;
    }
    case MotifKind::ladder:
        need(spec.size, 2, "size");
        for (NodeId i = 0; i < n; ++i) {
            e.emplace_back(i, n + i); // rung
            if (i + 1 < n) {
                e.emplace_back(i, i + 1);
                e.emplace_back(n + i, n + i + 1);
            }
        }
        nodes = 2 * spec.size;
        break;
    case MotifKind::cliques:
        need(spec.size, 2, "size");
        for (NodeId i = 0; i < n; ++i)
            for (NodeId j = i + 1; j < n; ++j) {
                e.emplace_back(i, j);
                e.emplace_back(n + i, n + j);
            }
        e.emplace_back(n - 1, n); // bridge
        nodes = 2 * spec.size;
        break;
    }
    return LabeledGraph(std::vector<Label>(nodes, 0), e);
}

/// Construction record of one positive/negative pair.
struct MotifPairMeta {
    std::size_t background_nodes = 0;
    std::vector<Edge> background_edges;
    std::vector<NodeId> inserted_nodes; // same indices in both graphs
};

struct MotifDataset {
    GraphDataset dataset; // graphs 2i (positive, class 1) and 2i+1 (negative, class 0)
    std::vector<MotifPairMeta> pairs;
    MotifSpec spec;
    std::uint64_t seed = 0;
};

namespace detail {

inline std::vector<Edge> erdos_renyi_edges(std::size_t n, double p, Rng& rng) {
    std::vector<Edge> e;
    for (NodeId i = 0; i < n; ++i)
        for (NodeId j = i + 1; j < n; ++j)
            if (uniform01(rng) < p) e.emplace_back(i, j);
    return e;
}

/// `m` distinct pairs drawn uniformly among the n(n-1)/2 possible ones.
inline std::vector<Edge> random_edges(std::size_t n, std::size_t m, Rng& rng) {
    std::vector<Edge> all;
    for (NodeId i = 0; i < n; ++i)
        for (NodeId j = i + 1; j < n; ++j) all.emplace_back(i, j);
    if (m > all.size()) throw InputError("random_edges: too many edges");
    for (std::size_t k = 0; k < m; ++k) std::swap(all[k], all[k + uniform_index(rng, all.size() - k)]);
    all.resize(m);
    std::sort(all.begin(), all.end());
    return all;
}

/// Background plus `insert` placed on nodes bg..bg+|insert|-1, each
/// (background, inserted) pair wired with probability `attach_p`.
inline LabeledGraph insert_into(std::size_t bg, const std::vector<Edge>& bg_edges, const LabeledGraph& insert,
                                double attach_p, Rng& rng) {
    std::vector<Edge> e = bg_edges;
    const auto off = static_cast<NodeId>(bg);
    for (auto [a, b] : insert.edges()) e.emplace_back(off + a, off + b);
    for (NodeId u = 0; u < bg; ++u)
        for (NodeId k = 0; k < insert.num_nodes(); ++k)
            if (uniform01(rng) < attach_p) e.emplace_back(u, off + k);
    return LabeledGraph(std::vector<Label>(bg + insert.num_nodes(), 0), e);
}

} // namespace detail

/// Balanced motif-detection dataset. Every pair shares one Erdős–Rényi
/// background (edge probability 0.1); the positive graph receives the motif,
/// the negative one a uniformly random graph with the motif's node and edge
/// counts. Inserted nodes attach to each background node with probability
/// 0.02. Total node counts are uniform in [30, 50].
inline MotifDataset generate_motif_dataset(const MotifSpec& spec, std::size_t count, std::uint64_t seed) {
    if (count == 0 || count % 2 != 0) throw InputError("motif dataset size must be even and positive");
    constexpr double kBackgroundP = 0.1;
    constexpr double kAttachP = 0.02;
    const LabeledGraph motif = make_motif(spec);
    if (motif.num_nodes() >= 30) throw InputError("motif too large for 30-50 node graphs");
    auto rng = make_rng(seed, "synth");
    MotifDataset out;
    out.spec = spec;
    out.seed = seed;
    out.dataset.name = to_string(spec.kind);
    out.dataset.dictionary = LabelDictionary{1};
    out.dataset.num_classes = 2;
    for (std::size_t i = 0; i < count / 2; ++i) {
        const std::size_t total = 30 + uniform_index(rng, 21);
        MotifPairMeta meta;
        meta.background_nodes = total - motif.num_nodes();
        meta.background_edges = detail::erdos_renyi_edges(meta.background_nodes, kBackgroundP, rng);
        for (NodeId k = 0; k < motif.num_nodes(); ++k)
            meta.inserted_nodes.push_back(static_cast<NodeId>(meta.background_nodes + k));
        const LabeledGraph decoy(std::vector<Label>(motif.num_nodes(), 0),
                                 detail::random_edges(motif.num_nodes(), motif.num_edges(), rng));
        out.dataset.graphs.push_back(
            detail::insert_into(meta.background_nodes, meta.background_edges, motif, kAttachP, rng));
        out.dataset.labels.push_back(1);
        out.dataset.graphs.push_back(
            detail::insert_into(meta.background_nodes, meta.background_edges, decoy, kAttachP, rng));
        out.dataset.labels.push_back(0);
        out.pairs.push_back(std::move(meta));
    }
    return out;
}

/// key=value record of the generator inputs and motif node positions.
inline void write_motif_meta(const MotifDataset& md, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw LoadError(path.string(), 0, "cannot write file");
    out << "seed=" << md.seed << '\n';
    out << "motif=" << to_string(md.spec.kind) << '\n';
    out << "size=" << md.spec.size << '\n';
    if (md.spec.kind == MotifKind::grid) out << "size2=" << md.spec.size2 << '\n';
    out << "count=" << md.dataset.size() << '\n';
    for (std::size_t i = 0; i < md.pairs.size(); ++i) {
        out << "graph." << 2 * i + 1 << ".motif_nodes=";
        for (std::size_t k = 0; k < md.pairs[i].inserted_nodes.size(); ++k)
            out << (k ? "," : "") << md.pairs[i].inserted_nodes[k] + 1;
        out << '\n';
    }
}

/// Two WL-indistinguishable classes: class 1 is k disjoint triangles, class 0
/// a union of cycles of length >= 4 over the same 3k nodes (k in 2..5). Each
/// graph also gets 0-2 pendant nodes hung on random nodes.
inline GraphDataset triangle_cycle_dataset(std::size_t count, std::uint64_t seed) {
    if (count == 0 || count % 2 != 0) throw InputError("triangle/cycle dataset size must be even and positive");
    auto rng = make_rng(seed, "synth");
    GraphDataset ds;
    ds.name = "triangles";
    ds.dictionary = LabelDictionary{1};
    ds.num_classes = 2;
    auto add_pendants = [&](std::size_t n, std::vector<Edge> e) {
        const std::size_t extra = uniform_index(rng, 3);
        for (std::size_t p = 0; p < extra; ++p)
            e.emplace_back(static_cast<NodeId>(uniform_index(rng, n)), static_cast<NodeId>(n + p));
        return LabeledGraph(std::vector<Label>(n + extra, 0), e);
    };
    auto add_cycle = [](std::vector<Edge>& e, NodeId start, NodeId len) {
        for (NodeId i = 0; i < len; ++i) e.emplace_back(start + i, start + (i + 1) % len);
    };
    for (std::size_t i = 0; i < count / 2; ++i) {
        const auto k = static_cast<NodeId>(2 + uniform_index(rng, 4));
        const NodeId n = 3 * k;
        std::vector<Edge> tri;
        for (NodeId t = 0; t < k; ++t) add_cycle(tri, 3 * t, 3);
        ds.graphs.push_back(add_pendants(n, tri));
        ds.labels.push_back(1);

        // split n into cycle lengths >= 4
        std::vector<Edge> cyc;
        NodeId start = 0;
        while (start < n) {
            const NodeId left = n - start;
            NodeId len = left;
            if (left >= 8) len = static_cast<NodeId>(4 + uniform_index(rng, left - 7));
            add_cycle(cyc, start, len);
            start += len;
        }
        ds.graphs.push_back(add_pendants(n, cyc));
        ds.labels.push_back(0);
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Splits

struct Split {
    std::vector<std::size_t> train, val, test;
};

namespace detail {

/// Per-class shuffled index lists concatenated in class order.
inline std::vector<std::size_t> stratified_order(const GraphDataset& ds, std::span<const std::size_t> indices,
                                                 Rng& rng) {
    std::vector<std::vector<std::size_t>> by_class(ds.num_classes);
    for (auto i : indices) by_class[ds.labels[i]].push_back(i);
    std::vector<std::size_t> out;
    for (auto& c : by_class) {
        shuffle_range(c.begin(), c.end(), rng);
        out.insert(out.end(), c.begin(), c.end());
    }
    return out;
}

/// Round-robin deal of a stratified order into `parts` groups, each sorted.
inline std::vector<std::vector<std::size_t>> deal(const std::vector<std::size_t>& order, std::size_t parts) {
    std::vector<std::vector<std::size_t>> out(parts);
    for (std::size_t i = 0; i < order.size(); ++i) out[i % parts].push_back(order[i]);
    for (auto& p : out) std::sort(p.begin(), p.end());
    return out;
}

/// Stratified 9:1 train/val split of `rest`.
inline void split_train_val(const GraphDataset& ds, const std::vector<std::size_t>& rest, Rng& rng, Split& s) {
    auto parts = deal(stratified_order(ds, rest, rng), 10);
    s.val = parts[0];
    for (std::size_t p = 1; p < parts.size(); ++p) s.train.insert(s.train.end(), parts[p].begin(), parts[p].end());
    std::sort(s.train.begin(), s.train.end());
}

} // namespace detail

/// Stratified k-fold protocol: fold f tests on part f, and the remaining
/// graphs split 9:1 (stratified) into train and validation. Classes with
/// fewer than `folds` members are still dealt round-robin, which cannot
/// stratify them; each such class is reported through `warnings`.
inline std::vector<Split> split_kfold(const GraphDataset& ds, std::size_t folds, std::uint64_t seed,
                                      std::vector<std::string>* warnings = nullptr) {
    if (folds < 2) throw InputError("split_kfold: need at least 2 folds");
    if (ds.size() < folds)
        throw InputError("split_kfold: " + std::to_string(folds) + " folds but only " + std::to_string(ds.size()) +
                         " graphs");
    const auto counts = ds.class_counts();
    for (std::size_t c = 0; c < counts.size(); ++c)
        if (counts[c] < folds && warnings)
            warnings->push_back("class " + std::to_string(c) + " has " + std::to_string(counts[c]) +
                                " members, fewer than " + std::to_string(folds) + " folds");
    auto rng = make_rng(seed, "splits");
    std::vector<std::size_t> all(ds.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    const auto parts = detail::deal(detail::stratified_order(ds, all, rng), folds);
    std::vector<Split> out;
    for (std::size_t f = 0; f < folds; ++f) {
        Split s;
        s.test = parts[f];
        std::vector<std::size_t> rest;
        for (std::size_t p = 0; p < folds; ++p)
            if (p != f) rest.insert(rest.end(), parts[p].begin(), parts[p].end());
        std::sort(rest.begin(), rest.end());
        detail::split_train_val(ds, rest, rng, s);
        out.push_back(std::move(s));
    }
    return out;
}

/// Single stratified 80/10/10 train/val/test split.
inline Split split_holdout(const GraphDataset& ds, std::uint64_t seed) {
    if (ds.size() < 10) throw InputError("split_holdout: need at least 10 graphs");
    auto rng = make_rng(seed, "splits");
    std::vector<std::size_t> all(ds.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    const auto parts = detail::deal(detail::stratified_order(ds, all, rng), 10);
    Split s;
    s.test = parts[0];
    s.val = parts[1];
    for (std::size_t p = 2; p < parts.size(); ++p) s.train.insert(s.train.end(), parts[p].begin(), parts[p].end());
    std::sort(s.train.begin(), s.train.end());
    return s;
}

/// Graphs `indices` of `ds` as a new dataset (same dictionary and classes).
inline GraphDataset subset(const GraphDataset& ds, std::span<const std::size_t> indices) {
    GraphDataset out;
    out.name = ds.name;
    out.dictionary = ds.dictionary;
    out.num_classes = ds.num_classes;
    for (auto i : indices) {
        out.graphs.push_back(ds.graphs.at(i));
        out.labels.push_back(ds.labels.at(i));
    }
    return out;
}

} // namespace gkc

#endif // GKC_DATA_HPP
