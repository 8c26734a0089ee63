#include <filesystem>
#include <fstream>
#include <set>

#include <unistd.h>

#include <gtest/gtest.h>

#include "gkc/data.hpp"
#include "gkc/kernels.hpp"

using namespace gkc;
namespace fs = std::filesystem;

namespace {

class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        path_ = fs::temp_directory_path() / ("gkc_test_data_" + tag + "_" + std::to_string(::getpid()));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    const fs::path& path() const { return path_; }

    void write(const std::string& file, const std::string& text) const { std::ofstream(path_ / file) << text; }

private:
    fs::path path_;
};

void write_toy(const TempDir& dir, const std::string& edges, const std::string& indicator = "1\n1\n",
               const std::string& labels = "1\n") {
    dir.write("toy_A.txt", edges);
    dir.write("toy_graph_indicator.txt", indicator);
    dir.write("toy_graph_labels.txt", labels);
}

std::string load_error(const fs::path& dir) {
    try {
        load_tudataset(dir, "toy");
    } catch (const LoadError& e) {
        return e.what();
    }
    return "";
}

} // namespace

TEST(LoadTudataset, Mutag) {
    const auto ds = load_tudataset(GKC_DATA_DIR "/MUTAG", "MUTAG");
    EXPECT_EQ(ds.size(), 188u);
    EXPECT_EQ(ds.dictionary.size, 7u);
    EXPECT_EQ(ds.num_classes, 2u);
    EXPECT_NEAR(ds.mean_nodes(), 17.93, 0.005);
    EXPECT_EQ(ds.class_counts(), (std::vector<std::size_t>{63, 125}));
    EXPECT_NO_THROW(ds.validate());
}

TEST(LoadTudataset, ToyFixture) {
    TempDir dir("toy");
    write_toy(dir, "1, 2\n2, 1\n");
    const auto ds = load_tudataset(dir.path(), "toy");
    ASSERT_EQ(ds.size(), 1u);
    EXPECT_EQ(ds.graphs[0].num_nodes(), 2u);
    EXPECT_EQ(ds.graphs[0].num_edges(), 1u);
    EXPECT_EQ(ds.graphs[0].labels(), (std::vector<Label>{0, 0})); // no node-label file
    EXPECT_EQ(ds.dictionary.size, 1u);
    EXPECT_EQ(ds.labels[0], 0u);
}

TEST(LoadTudataset, LabelsRemapBySortedValue) {
    TempDir dir("remap");
    write_toy(dir, "1,2\n3,4\n", "1\n1\n2\n2\n", "-1\n5\n");
    dir.write("toy_node_labels.txt", "7\n3\n3\n9\n");
    const auto ds = load_tudataset(dir.path(), "toy");
    EXPECT_EQ(ds.labels, (std::vector<std::size_t>{0, 1}));
    EXPECT_EQ(ds.graphs[0].labels(), (std::vector<Label>{1, 0}));
    EXPECT_EQ(ds.graphs[1].labels(), (std::vector<Label>{0, 2}));
}

TEST(LoadTudataset, ErrorsNameFileAndLine) {
    {
        TempDir dir("range");
        write_toy(dir, "1, 2\n2, 3\n");
        EXPECT_NE(load_error(dir.path()).find("toy_A.txt:2:"), std::string::npos);
    }
    {
        TempDir dir("ragged");
        write_toy(dir, "1, 2\n2\n");
        EXPECT_NE(load_error(dir.path()).find("toy_A.txt:2:"), std::string::npos);
    }
    {
        TempDir dir("garbage");
        write_toy(dir, "1, 2\n", "1\nx\n");
        EXPECT_NE(load_error(dir.path()).find("toy_graph_indicator.txt:2:"), std::string::npos);
    }
    {
        TempDir dir("missing");
        dir.write("toy_A.txt", "1, 2\n");
        EXPECT_NE(load_error(dir.path()).find("toy_graph_indicator.txt"), std::string::npos);
    }
    {
        TempDir dir("cross");
        write_toy(dir, "1, 3\n", "1\n1\n2\n", "0\n1\n");
        EXPECT_NE(load_error(dir.path()).find("different graphs"), std::string::npos);
    }
    {
        TempDir dir("nodelabels");
        write_toy(dir, "1, 2\n");
        dir.write("toy_node_labels.txt", "1\n");
        EXPECT_NE(load_error(dir.path()).find("toy_node_labels.txt"), std::string::npos);
    }
}

TEST(LoadTudataset, SelfLoopsAreDroppedWithAWarning) {
    TempDir dir("loop");
    write_toy(dir, "1, 1\n1, 2\n");
    std::vector<std::string> warnings;
    const auto ds = load_tudataset(dir.path(), "toy", &warnings);
    EXPECT_EQ(ds.graphs[0].num_edges(), 1u);
    ASSERT_EQ(warnings.size(), 1u);
    EXPECT_NE(warnings[0].find("toy_A.txt:1"), std::string::npos);
}

TEST(LoadTudataset, RoundTrip) {
    const auto mutag = load_tudataset(GKC_DATA_DIR "/MUTAG", "MUTAG");
    TempDir dir("roundtrip");
    save_tudataset(mutag, dir.path(), "copy");
    const auto back = load_tudataset(dir.path(), "copy");
    ASSERT_EQ(back.size(), mutag.size());
    EXPECT_EQ(back.labels, mutag.labels);
    EXPECT_EQ(back.dictionary, mutag.dictionary);
    for (std::size_t i = 0; i < mutag.size(); ++i) {
        const auto& a = mutag.graphs[i];
        const auto& b = back.graphs[i];
        ASSERT_EQ(a.num_nodes(), b.num_nodes());
        ASSERT_EQ(a.num_edges(), b.num_edges());
        if (a.num_nodes() <= kCanonicalCompareLimit) {
            EXPECT_TRUE(graph_equal_canonical(a, b));
        }
        EXPECT_EQ(wl_subtree_kernel(a, b, 3), wl_subtree_kernel(a, a, 3));
        EXPECT_EQ(a.edges(), b.edges());
    }
}

TEST(Motifs, Shapes) {
    const auto ring = make_motif(MotifSpec::defaults(MotifKind::ring));
    EXPECT_EQ(ring.num_nodes(), 6u);
    EXPECT_EQ(ring.num_edges(), 6u);
    const auto wheel = make_motif(MotifSpec::defaults(MotifKind::wheel));
    EXPECT_EQ(wheel.num_nodes(), 7u);
    EXPECT_EQ(wheel.num_edges(), 12u);
    const auto ladder = make_motif(MotifSpec::defaults(MotifKind::ladder));
    EXPECT_EQ(ladder.num_nodes(), 8u);
    EXPECT_EQ(ladder.num_edges(), 10u);
    const auto grid = make_motif(MotifSpec::defaults(MotifKind::grid));
    EXPECT_EQ(grid.num_nodes(), 9u);
    EXPECT_EQ(grid.num_edges(), 12u);
    const auto cliques = make_motif(MotifSpec::defaults(MotifKind::cliques));
    EXPECT_EQ(cliques.num_nodes(), 8u);
    EXPECT_EQ(cliques.num_edges(), 13u);
    for (const auto& g : {ring, wheel, ladder, grid, cliques}) EXPECT_TRUE(is_connected(g));
    EXPECT_THROW(make_motif({MotifKind::ring, 2, 0}), InputError);
    EXPECT_THROW(make_motif({MotifKind::grid, 3, 1}), InputError);
    EXPECT_EQ(parse_motif_kind("ladder"), MotifKind::ladder);
    EXPECT_THROW(parse_motif_kind("star"), InputError);
}

TEST(MotifDataset, BalancedSizesAndSharedBackgrounds) {
    const auto spec = MotifSpec::defaults(MotifKind::wheel);
    const auto md = generate_motif_dataset(spec, 60, 3);
    const auto& ds = md.dataset;
    ASSERT_EQ(ds.size(), 60u);
    EXPECT_EQ(ds.class_counts(), (std::vector<std::size_t>{30, 30}));
    const auto motif = make_motif(spec);
    for (std::size_t i = 0; i < md.pairs.size(); ++i) {
        const auto& meta = md.pairs[i];
        const auto& pos = ds.graphs[2 * i];
        const auto& neg = ds.graphs[2 * i + 1];
        EXPECT_EQ(ds.labels[2 * i], 1u);
        EXPECT_EQ(ds.labels[2 * i + 1], 0u);
        EXPECT_GE(pos.num_nodes(), 30u);
        EXPECT_LE(pos.num_nodes(), 50u);
        EXPECT_EQ(pos.num_nodes(), neg.num_nodes());
        // both graphs restrict to the same background
        std::vector<NodeId> bg(meta.background_nodes);
        for (NodeId v = 0; v < bg.size(); ++v) bg[v] = v;
        EXPECT_EQ(induced_subgraph(pos, bg).edges(), induced_subgraph(neg, bg).edges());
        EXPECT_EQ(induced_subgraph(pos, bg).edges(), meta.background_edges);
        // the positive graph holds the motif on the recorded nodes
        const auto inserted_pos = induced_subgraph(pos, meta.inserted_nodes);
        EXPECT_EQ(inserted_pos.edges(), motif.edges());
        EXPECT_EQ(induced_subgraph(neg, meta.inserted_nodes).num_edges(), motif.num_edges());
    }
    EXPECT_THROW(generate_motif_dataset(spec, 7, 0), InputError);
}

TEST(MotifDataset, SmallestCountAndDeterminism) {
    const auto spec = MotifSpec::defaults(MotifKind::ring);
    const auto a = generate_motif_dataset(spec, 2, 11);
    EXPECT_EQ(a.dataset.labels, (std::vector<std::size_t>{1, 0}));
    const auto b = generate_motif_dataset(spec, 2, 11);
    EXPECT_EQ(a.dataset.graphs[1].edges(), b.dataset.graphs[1].edges());
    const auto c = generate_motif_dataset(spec, 2, 12);
    EXPECT_NE(a.dataset.graphs[0].edges(), c.dataset.graphs[0].edges());
}

TEST(MotifDataset, MetaSidecar) {
    TempDir dir("meta");
    const auto md = generate_motif_dataset(MotifSpec::defaults(MotifKind::grid), 4, 5);
    write_motif_meta(md, dir.path() / "grid_meta.txt");
    std::ifstream in(dir.path() / "grid_meta.txt");
    std::string text((std::istreambuf_iterator<char>(in)), {});
    EXPECT_NE(text.find("seed=5\n"), std::string::npos);
    EXPECT_NE(text.find("motif=grid\n"), std::string::npos);
    EXPECT_NE(text.find("size2=3\n"), std::string::npos);
    EXPECT_NE(text.find("graph.3.motif_nodes="), std::string::npos);
}

TEST(TriangleCycle, ClassesAreWlTwins) {
    const auto ds = triangle_cycle_dataset(40, 2);
    ASSERT_EQ(ds.size(), 40u);
    EXPECT_EQ(ds.class_counts(), (std::vector<std::size_t>{20, 20}));
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto [tri, paths] = count_graphlets3(ds.graphs[i]);
        (void)paths;
        if (ds.labels[i] == 1) EXPECT_GE(tri, 2u);
        else EXPECT_EQ(tri, 0u);
    }
}

TEST(Splits, KfoldArithmetic) {
    GraphDataset ds;
    ds.num_classes = 2;
    for (int i = 0; i < 100; ++i) {
        ds.graphs.push_back(LabeledGraph({0}, std::vector<Edge>{}));
        ds.labels.push_back(i % 2);
    }
    const auto folds = split_kfold(ds, 10, 4);
    ASSERT_EQ(folds.size(), 10u);
    std::multiset<std::size_t> tested;
    for (const auto& f : folds) {
        EXPECT_EQ(f.test.size(), 10u);
        EXPECT_EQ(f.val.size(), 9u);
        EXPECT_EQ(f.train.size(), 81u);
        std::set<std::size_t> rest(f.train.begin(), f.train.end());
        rest.insert(f.val.begin(), f.val.end());
        EXPECT_EQ(rest.size(), 90u);
        for (auto t : f.test) EXPECT_EQ(rest.count(t), 0u);
        tested.insert(f.test.begin(), f.test.end());
        std::size_t pos = 0;
        for (auto t : f.test) pos += ds.labels[t];
        EXPECT_EQ(pos, 5u); // stratified
    }
    EXPECT_EQ(tested.size(), 100u);
    EXPECT_EQ(std::set<std::size_t>(tested.begin(), tested.end()).size(), 100u);

    const auto again = split_kfold(ds, 10, 4);
    for (std::size_t f = 0; f < 10; ++f) {
        EXPECT_EQ(again[f].test, folds[f].test);
        EXPECT_EQ(again[f].val, folds[f].val);
        EXPECT_EQ(again[f].train, folds[f].train);
    }
    EXPECT_NE(split_kfold(ds, 10, 5)[0].test, folds[0].test);
}

TEST(Splits, SmallClassesWarnAndBadFoldCountsThrow) {
    GraphDataset ds;
    ds.num_classes = 2;
    for (int i = 0; i < 20; ++i) {
        ds.graphs.push_back(LabeledGraph({0}, std::vector<Edge>{}));
        ds.labels.push_back(i < 3 ? 1 : 0);
    }
    std::vector<std::string> warnings;
    const auto folds = split_kfold(ds, 10, 0, &warnings);
    EXPECT_EQ(folds.size(), 10u);
    ASSERT_EQ(warnings.size(), 1u);
    EXPECT_NE(warnings[0].find("class 1"), std::string::npos);
    EXPECT_THROW(split_kfold(ds, 21, 0), InputError);
    EXPECT_THROW(split_kfold(ds, 1, 0), InputError);
}

TEST(Splits, HoldoutIsStratifiedEightyTenTen) {
    const auto ds = load_tudataset(GKC_DATA_DIR "/MUTAG", "MUTAG");
    const auto s = split_holdout(ds, 0);
    EXPECT_EQ(s.train.size() + s.val.size() + s.test.size(), 188u);
    EXPECT_EQ(s.test.size(), 19u);
    EXPECT_EQ(s.val.size(), 19u);
    std::set<std::size_t> all(s.train.begin(), s.train.end());
    all.insert(s.val.begin(), s.val.end());
    all.insert(s.test.begin(), s.test.end());
    EXPECT_EQ(all.size(), 188u);
    const auto sub = subset(ds, s.test);
    const auto counts = sub.class_counts();
    EXPECT_NEAR(static_cast<double>(counts[0]) / 19.0, 63.0 / 188.0, 0.06);
}
