// gkc: command-line front end for training, evaluation and analysis.

#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gkc/checkpoint.hpp"
#include "gkc/experiment.hpp"

namespace fs = std::filesystem;
using namespace gkc;

namespace {

constexpr int kOk = 0, kRuntime = 1, kUsage = 2;

/// Bad invocation detected after parsing (missing dataset, unknown config key).
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string show(const std::string& s) { return s; }
std::string show(bool b) { return b ? "true" : "false"; }
std::string show(double x) { return format_double(x); }
std::string show(std::size_t x) { return std::to_string(x); }
std::string show(const std::vector<std::size_t>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
    return out;
}

/// Options of one subcommand, remembered in declaration order so the resolved
/// configuration can be printed in the same key=value form `--config` reads.
class Flags {
public:
    explicit Flags(CLI::App* app) : app_(app) {}

    template <class T>
    CLI::Option* add(const std::string& key, T& value, const std::string& help) {
        printers_.emplace_back(key, [&value] { return show(value); });
        return app_->add_option("--" + key, value, help)->capture_default_str();
    }

    CLI::Option* list(const std::string& key, std::vector<std::size_t>& value, const std::string& help) {
        return add(key, value, help)->delimiter(',');
    }

    CLI::Option* flag(const std::string& key, bool& value, const std::string& help) {
        printers_.emplace_back(key, [&value] { return show(value); });
        return app_->add_flag("--" + key, value, help);
    }

    void print(std::ostream& os) const {
        os << "# resolved config: " << app_->get_name() << '\n';
        for (const auto& [key, fn] : printers_) os << key << '=' << fn() << '\n';
    }

    std::string text() const {
        std::ostringstream os;
        for (const auto& [key, fn] : printers_) os << key << '=' << fn() << '\n';
        return os.str();
    }

    CLI::App* app() const { return app_; }

private:
    CLI::App* app_;
    std::vector<std::pair<std::string, std::function<std::string()>>> printers_;
};

struct Common {
    std::string config;
    std::uint64_t seed = 0;
    std::size_t jobs = 1;
};

void add_common(Flags& f, Common& c) {
    f.app()->add_option("--config", c.config, "key=value file; command-line flags take precedence");
    f.add("seed", c.seed, "root seed of every random stream");
    f.add("jobs", c.jobs, "worker threads for cv and grid")->check(CLI::PositiveNumber);
}

struct DataFlags {
    std::string data, name;
};

void add_data(Flags& f, DataFlags& d) {
    f.add("data", d.data, "directory holding <name>_A.txt and friends");
    f.add("name", d.name, "dataset name (file prefix)");
}

struct ModelFlags {
    std::size_t masks = 16, mask_nodes = 6, radius = 3, layers = 1;
    std::string kernel = "wl";
    std::size_t wl_iters = 3;
    bool raw_responses = false;
    std::size_t hidden = 0;
    std::string activation = "relu";
    double jsd_weight = 1e-4, lr = 1e-3, prob_lr = 1e-2;
    std::size_t epochs = 1000, batch = 32, patience = 100;
    bool freeze_masks = false;
};

void add_model(Flags& f, ModelFlags& m, bool shape = true) {
    if (shape) {
        f.add("masks", m.masks, "structural masks per layer");
        f.add("mask-nodes", m.mask_nodes, "maximum nodes per mask");
        f.add("radius", m.radius, "ego-subgraph radius");
        f.add("layers", m.layers, "GKC layers");
    }
    f.add("kernel", m.kernel, "graph kernel: wl or graphlet");
    f.add("wl-iters", m.wl_iters, "WL refinement iterations");
    f.flag("raw-responses", m.raw_responses, "use unnormalised kernel responses");
    f.add("hidden", m.hidden, "hidden units of the classifier (0: masks per layer)");
    f.add("activation", m.activation, "hidden activation: relu or sigmoid");
    f.add("jsd-weight", m.jsd_weight, "weight of the mask diversity term");
    f.add("lr", m.lr, "Adam learning rate of the classifier");
    f.add("prob-lr", m.prob_lr, "Adam learning rate of the edit logits");
    f.add("epochs", m.epochs, "maximum training epochs");
    f.add("batch", m.batch, "mini-batch size");
    f.add("patience", m.patience, "early-stopping patience in epochs");
    f.flag("freeze-masks", m.freeze_masks, "keep masks at their initial graphs");
}

LayerConfig layer_config(const ModelFlags& m) {
    LayerConfig c;
    c.num_masks = m.masks;
    c.max_mask_nodes = m.mask_nodes;
    c.radius = m.radius;
    c.kernel = {parse_kernel_kind(m.kernel), m.wl_iters, !m.raw_responses};
    return c;
}

TrainConfig train_config(const ModelFlags& m, const Common& c) {
    TrainConfig t;
    t.epochs = m.epochs;
    t.batch_size = m.batch;
    t.mlp_lr = m.lr;
    t.prob_lr = m.prob_lr;
    t.jsd_weight = m.jsd_weight;
    t.patience = m.patience;
    t.seed = c.seed;
    t.learn_masks = !m.freeze_masks;
    t.validate();
    return t;
}

NetworkConfig network_config(const ModelFlags& m, const GraphDataset& ds) {
    auto net = make_network(m.layers, layer_config(m), ds, parse_activation(m.activation));
    if (m.hidden) net.hidden = m.hidden;
    return net;
}

GraphDataset load_dataset(const DataFlags& d) {
    if (d.data.empty() || d.name.empty()) throw UsageError("--data and --name are required");
    const fs::path dir(d.data);
    if (!fs::is_directory(dir) || !fs::exists(dir / (d.name + "_graph_indicator.txt")))
        throw UsageError("dataset '" + d.name + "' not found in " + d.data);
    std::vector<std::string> warnings;
    auto ds = load_tudataset(dir, d.name, &warnings);
    for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
    std::cout << "dataset " << d.name << ": " << ds.size() << " graphs, " << ds.num_classes << " classes, "
              << ds.dictionary.size << " labels, mean nodes " << format_double(ds.mean_nodes()) << '\n';
    return ds;
}

fs::path require_out(const std::string& out) {
    if (out.empty()) throw UsageError("--out is required");
    fs::create_directories(out);
    return out;
}

void write_file(const fs::path& path, const std::function<void(std::ostream&)>& fn) {
    std::ofstream os(path);
    if (!os) throw LoadError(path.string(), 0, "cannot write file");
    fn(os);
}

/// key=value lines; blank lines and '#' comments skipped.
std::vector<std::pair<std::string, std::string>> read_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot read config file " + path);
    std::vector<std::pair<std::string, std::string>> out;
    std::string line;
    std::size_t lineno = 0;
    const auto trim = [](std::string s) {
        const auto a = s.find_first_not_of(" \t\r");
        const auto b = s.find_last_not_of(" \t\r");
        return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw UsageError(path + ":" + std::to_string(lineno) + ": expected key=value");
        out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return out;
}

/// Fills every option not given on the command line from the config file.
void apply_config(CLI::App* app, const std::string& path) {
    for (const auto& [key, value] : read_config(path)) {
        auto* opt = app->get_option_no_throw("--" + key);
        if (!opt || key == "config") throw UsageError("unknown config key '" + key + "' for " + app->get_name());
        if (opt->count() > 0) continue;
        opt->add_result(value);
        opt->run_callback();
    }
}

void print_epoch(const EpochStats& e) {
    std::cerr << "epoch " << e.epoch << " train_loss=" << format_double(e.train_loss)
              << " train_acc=" << format_double(e.train_acc) << " val_loss=" << format_double(e.val_loss)
              << " val_acc=" << format_double(e.val_acc) << " accept=" << format_double(e.edit_accept_rate) << '\n';
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Graph kernel convolution toolkit"};
    app.require_subcommand(1);
    std::map<CLI::App*, Flags> flags;
    const auto sub = [&](const std::string& name, const std::string& help) -> Flags& {
        auto* s = app.add_subcommand(name, help);
        return flags.emplace(s, Flags(s)).first->second;
    };

    // train
    Common train_c;
    DataFlags train_d;
    ModelFlags train_m;
    std::string train_out, train_drd_log;
    bool train_progress = false;
    auto& train_f = sub("train", "train on a stratified 80/10/10 split and save a checkpoint");
    add_common(train_f, train_c);
    add_data(train_f, train_d);
    add_model(train_f, train_m);
    train_f.add("out", train_out, "output directory");
    train_f.add("drd-log", train_drd_log, "optional CSV of every mask edit proposal");
    train_f.flag("progress", train_progress, "print per-epoch statistics to stderr");

    // cv
    Common cv_c;
    DataFlags cv_d;
    ModelFlags cv_m;
    std::size_t cv_folds = 10;
    std::string cv_out;
    auto& cv_f = sub("cv", "stratified k-fold cross-validation");
    add_common(cv_f, cv_c);
    add_data(cv_f, cv_d);
    add_model(cv_f, cv_m);
    cv_f.add("folds", cv_folds, "number of folds");
    cv_f.add("out", cv_out, "output directory");

    // grid
    Common grid_c;
    DataFlags grid_d;
    ModelFlags grid_m;
    GridSpec grid_spec;
    std::size_t grid_sample = 0, grid_folds = 10;
    std::string grid_out;
    auto& grid_f = sub("grid", "grid search under the k-fold protocol");
    add_common(grid_f, grid_c);
    add_data(grid_f, grid_d);
    add_model(grid_f, grid_m, false);
    grid_f.list("grid-masks", grid_spec.masks, "mask counts");
    grid_f.list("grid-nodes", grid_spec.nodes, "maximum mask sizes");
    grid_f.list("grid-radius", grid_spec.radius, "ego radii");
    grid_f.list("grid-layers", grid_spec.layers, "layer counts");
    grid_f.add("sample", grid_sample, "evaluate this many random grid points (0: all)");
    grid_f.add("folds", grid_folds, "number of folds");
    grid_f.add("out", grid_out, "output directory");

    // synth
    Common synth_c;
    std::string synth_motif, synth_out, synth_name;
    std::size_t synth_count = 2000, synth_size = 0, synth_size2 = 0;
    auto& synth_f = sub("synth", "generate a motif-insertion dataset");
    add_common(synth_f, synth_c);
    synth_f.add("motif", synth_motif, "ring, wheel, grid, ladder or cliques");
    synth_f.add("count", synth_count, "number of graphs (even)");
    synth_f.add("size", synth_size, "motif size (0: default for the motif)");
    synth_f.add("size2", synth_size2, "grid columns (0: default)");
    synth_f.add("name", synth_name, "dataset name (default: the motif)");
    synth_f.add("out", synth_out, "output directory");

    // masks
    Common masks_c;
    DataFlags masks_d;
    std::string masks_ckpt, masks_out;
    std::size_t masks_top_k = 0;
    auto& masks_f = sub("masks", "rank masks by significance and export them as DOT");
    add_common(masks_f, masks_c);
    add_data(masks_f, masks_d);
    masks_f.add("checkpoint", masks_ckpt, "checkpoint written by train");
    masks_f.add("top-k", masks_top_k, "keep only the k most significant masks (0: all)");
    masks_f.add("out", masks_out, "output directory");

    // kernel
    Common kernel_c;
    DataFlags kernel_d;
    std::string kernel_kind = "wl", kernel_out;
    std::size_t kernel_iters = 3;
    bool kernel_normalized = false;
    auto& kernel_f = sub("kernel", "Gram matrix of a dataset as CSV");
    add_common(kernel_f, kernel_c);
    add_data(kernel_f, kernel_d);
    kernel_f.add("kernel", kernel_kind, "wl or graphlet");
    kernel_f.add("wl-iters", kernel_iters, "WL refinement iterations");
    kernel_f.flag("normalized", kernel_normalized, "cosine-normalise the kernel");
    kernel_f.add("out", kernel_out, "output CSV file");

    // expressiveness
    Common expr_c;
    std::string expr_kind = "wl";
    std::size_t expr_iters = 3;
    bool expr_raw = false;
    auto& expr_f = sub("expressiveness", "check the kernel against the canonical separation examples");
    add_common(expr_f, expr_c);
    expr_f.add("kernel", expr_kind, "wl or graphlet");
    expr_f.add("wl-iters", expr_iters, "WL refinement iterations");
    expr_f.flag("raw-responses", expr_raw, "use unnormalised kernel responses");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    CLI::App* active = app.get_subcommands().front();
    const Flags& f = flags.at(active);
    const std::map<CLI::App*, const Common*> commons{{train_f.app(), &train_c}, {cv_f.app(), &cv_c},
                                                     {grid_f.app(), &grid_c},   {synth_f.app(), &synth_c},
                                                     {masks_f.app(), &masks_c}, {kernel_f.app(), &kernel_c},
                                                     {expr_f.app(), &expr_c}};
    const std::string name = active->get_name();
    try {
        const Common& common = *commons.at(active);
        if (!common.config.empty()) {
            try {
                apply_config(active, common.config);
            } catch (const CLI::ParseError& e) {
                throw UsageError(std::string("config: ") + e.what());
            }
        }
        f.print(std::cout);

        if (name == "train") {
            const auto ds = load_dataset(train_d);
            const auto out = require_out(train_out);
            const auto net = network_config(train_m, ds);
            const auto cfg = train_config(train_m, train_c);
            const auto split = split_holdout(ds, train_c.seed);
            TrainHooks hooks;
            std::ofstream drd_log;
            if (!train_drd_log.empty()) {
                drd_log.open(train_drd_log);
                if (!drd_log) throw LoadError(train_drd_log, 0, "cannot write file");
                hooks.acceptance_log = &drd_log;
            }
            if (train_progress) hooks.on_epoch = [](const EpochStats& e, const ModelParams&) { print_epoch(e); };
            const auto r = run_split(ds, split, net, cfg, hooks);
            save_checkpoint(r.params, out / "model.gkc", f.text());
            write_file(out / "report.csv", [&](std::ostream& os) { write_report_csv(os, r.report); });
            write_file(out / "summary.txt", [&](std::ostream& os) { write_report_summary(os, r.report); });
            write_report_summary(std::cout, r.report);
            std::cout << "wrote " << (out / "model.gkc").string() << '\n';
        } else if (name == "cv") {
            const auto ds = load_dataset(cv_d);
            const auto out = require_out(cv_out);
            std::vector<std::string> warnings;
            const auto cv = cross_validate(ds, network_config(cv_m, ds), train_config(cv_m, cv_c), cv_folds,
                                           cv_c.jobs, &warnings);
            for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
            write_file(out / "cv.csv", [&](std::ostream& os) { write_cv_csv(os, cv); });
            std::cout << "cv_accuracy=" << format_double(cv.mean_accuracy) << '\n'
                      << "cv_stderr=" << format_double(cv.stderr_accuracy) << '\n';
        } else if (name == "grid") {
            const auto ds = load_dataset(grid_d);
            const auto out = require_out(grid_out);
            std::optional<std::size_t> sample;
            if (grid_sample) sample = grid_sample;
            const auto g = grid_search(ds, grid_spec, layer_config(grid_m), parse_activation(grid_m.activation),
                                       train_config(grid_m, grid_c), sample, grid_folds, grid_c.jobs);
            write_file(out / "leaderboard.csv", [&](std::ostream& os) { write_leaderboard_csv(os, g); });
            std::cout << "best masks=" << g.best.masks << " nodes=" << g.best.nodes << " radius=" << g.best.radius
                      << " layers=" << g.best.layers << '\n'
                      << "protocol_accuracy=" << format_double(g.protocol_mean) << '\n'
                      << "protocol_stderr=" << format_double(g.protocol_stderr) << '\n';
        } else if (name == "synth") {
            if (synth_motif.empty()) throw UsageError("--motif is required");
            const auto out = require_out(synth_out);
            auto spec = MotifSpec::defaults(parse_motif_kind(synth_motif));
            if (synth_size) spec.size = synth_size;
            if (synth_size2) spec.size2 = synth_size2;
            const auto md = generate_motif_dataset(spec, synth_count, synth_c.seed);
            const auto ds_name = synth_name.empty() ? synth_motif : synth_name;
            save_tudataset(md.dataset, out, ds_name);
            write_motif_meta(md, out / (ds_name + "_meta.txt"));
            std::cout << "wrote " << md.dataset.size() << " graphs as " << (out / ds_name).string() << '\n';
        } else if (name == "masks") {
            if (masks_ckpt.empty()) throw UsageError("--checkpoint is required");
            if (!fs::exists(masks_ckpt)) throw UsageError("checkpoint not found: " + masks_ckpt);
            const auto params = load_checkpoint(masks_ckpt);
            const auto ds = load_dataset(masks_d);
            const auto out = require_out(masks_out);
            std::vector<std::size_t> all(ds.size());
            for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
            auto sig = mask_significance(params, ds, all);
            if (masks_top_k && masks_top_k < sig.size()) sig.resize(masks_top_k);
            std::vector<std::size_t> columns;
            for (const auto& s : sig) columns.push_back(s.column);
            write_file(out / "significance.csv", [&](std::ostream& os) { write_significance_csv(os, sig); });
            const auto written = export_masks(params, ds, all, out, columns);
            write_significance_csv(std::cout, sig);
            std::cout << "wrote " << written.size() << " DOT files to " << out.string() << '\n';
        } else if (name == "kernel") {
            const auto ds = load_dataset(kernel_d);
            if (ds.size() == 0) throw InputError("dataset is empty");
            if (kernel_out.empty()) throw UsageError("--out is required");
            const KernelConfig kc{parse_kernel_kind(kernel_kind), kernel_iters, kernel_normalized};
            kc.validate();
            const auto gram = gram_matrix(kc, ds.graphs);
            const fs::path out(kernel_out);
            if (out.has_parent_path()) fs::create_directories(out.parent_path());
            write_file(out, [&](std::ostream& os) {
                os << std::setprecision(12);
                for (Eigen::Index j = 0; j < gram.cols(); ++j) os << ',' << j;
                os << '\n';
                for (Eigen::Index i = 0; i < gram.rows(); ++i) {
                    os << i;
                    for (Eigen::Index j = 0; j < gram.cols(); ++j) os << ',' << gram(i, j);
                    os << '\n';
                }
            });
            std::cout << "wrote " << gram.rows() << "x" << gram.cols() << " Gram matrix to " << out.string() << '\n';
        } else if (name == "expressiveness") {
            const KernelConfig kc{parse_kernel_kind(expr_kind), expr_iters, !expr_raw};
            const auto rep = expressiveness_report(kc);
            for (const auto& c : rep.checks)
                std::cout << "check " << c.name << ' ' << (c.passed ? "pass" : "fail") << ' ' << c.detail << '\n';
            std::cout << "expressiveness=" << (rep.passed() ? "pass" : "fail") << '\n';
            return rep.passed() ? kOk : kRuntime;
        }
        return kOk;
    } catch (const UsageError& e) {
        std::cerr << "gkc " << name << ": " << e.what() << '\n';
        return kUsage;
    } catch (const InputError& e) {
        std::cerr << "gkc " << name << ": " << e.what() << '\n';
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "gkc " << name << ": error: " << e.what() << '\n';
        return kRuntime;
    }
}
