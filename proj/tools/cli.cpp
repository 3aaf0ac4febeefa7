#include "cli.hpp"

#include "pointgcn/data.hpp"
#include "pointgcn/train.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace pointgcn::cli {

namespace {

namespace fs = std::filesystem;

/// Usage or configuration error: exit code 1.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item.erase(0, item.find_first_not_of(" \t"));
        item.erase(item.find_last_not_of(" \t") + 1);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

struct SynthArgs {
    std::string classes = "sphere,cube,cylinder,torus";
    std::size_t per_class = 100;
    std::size_t points = 1024;
    double noise = 0.0;
    std::uint64_t seed = 0;
    std::string out;
};

struct PreprocessArgs {
    std::string in;
    std::string out;
    std::size_t points = 1024;
    std::size_t sample = 2048;
    std::uint64_t seed = 0;
};

struct TrainArgs {
    std::string train_path, test_path;
    std::string pooling = "global";
    std::size_t knn = 40;
    int order = 3;
    std::string filters = "1000,1000";
    std::size_t centroids = 55;
    std::size_t cluster_k = 50;
    std::string cluster_mode = "knn";
    std::size_t batch = 28;
    std::size_t epochs = 100;
    double lr = 1e-3;
    double weight_decay = 2e-4;
    double keep_conv = 0.9;
    double keep_fc = 0.5;
    std::string sigma = "adaptive";
    bool no_bias = false;
    bool multires_concat = false;
    std::uint64_t fps_seed = 0;
    std::uint64_t seed = 0;
    std::size_t threads = 1;
    bool no_graph_cache = false;
    bool quiet = false;
    std::string out_checkpoint = "pointgcn.ckpt";
    std::string report = "report.csv";
    std::string resume;
};

struct EvalArgs {
    std::string checkpoint, data;
    std::size_t threads = 1;
};

struct ActiveArgs {
    std::string checkpoint, data, out = "active_points.csv";
    std::size_t index = 0;
};

ModelConfig model_config_from(const TrainArgs& a, std::size_t classes) {
    ModelConfig c;
    try {
        c.pooling = parse_pooling_mode(a.pooling);
        c.cluster_mode = parse_cluster_mode(a.cluster_mode);
        if (!c.set("filters", a.filters)) throw std::invalid_argument("filters");
        if (!c.set("sigma", a.sigma)) throw std::invalid_argument("sigma");
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    c.knn_k = a.knn;
    c.cheb_order = a.order;
    c.centroid_count = a.centroids;
    c.cluster_k = a.cluster_k;
    c.class_count = classes;
    c.keep_conv = a.keep_conv;
    c.keep_fc = a.keep_fc;
    c.weight_decay = a.weight_decay;
    c.conv_bias = !a.no_bias;
    c.multires_concat = a.multires_concat;
    c.fps_seed = a.fps_seed;
    try {
        c.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    return c;
}

void print_confusion(std::ostream& out, const EvalResult& r, const std::vector<std::string>& names) {
    out << "confusion (rows = true class, columns = predicted):\n";
    for (std::size_t i = 0; i < r.confusion.size(); ++i) {
        out << std::setw(12) << (i < names.size() ? names[i] : std::to_string(i));
        for (std::size_t v : r.confusion[i]) out << ' ' << std::setw(5) << v;
        out << '\n';
    }
}

int run_synth(const SynthArgs& a, std::ostream& out) {
    if (a.per_class == 0) throw UsageError("--per-class must be at least 1");
    if (a.points < 2) throw UsageError("--points must be at least 2");
    SynthOptions o;
    o.classes = split_list(a.classes);
    o.per_class = a.per_class;
    o.points = a.points;
    o.noise_sigma = a.noise;
    o.seed = a.seed;
    for (const auto& name : o.classes) {
        const auto& known = synth_class_names();
        if (std::find(known.begin(), known.end(), name) == known.end())
            throw UsageError("unknown synthetic class '" + name + "'");
    }
    const Dataset d = synth_generate(o);
    write_packed(d, a.out);
    out << "wrote " << d.size() << " clouds (" << d.class_count() << " classes, " << a.points << " points) to "
        << a.out << '\n';
    return 0;
}

int run_preprocess(const PreprocessArgs& a, std::ostream& out, std::ostream& err) {
    if (a.points == 0 || a.points > a.sample) throw UsageError("--points must be in [1, --sample]");
    if (!fs::is_directory(a.in)) throw std::runtime_error("input directory '" + a.in + "' does not exist");
    const OffConversion conv = convert_off_tree(a.in, {a.points, a.sample}, a.seed);
    fs::create_directories(a.out);
    write_packed(conv.train, fs::path(a.out) / "train.pgc");
    write_packed(conv.test, fs::path(a.out) / "test.pgc");
    for (const auto& f : conv.failures) err << "failed: " << f << '\n';
    out << "train: " << conv.train.size() << " clouds, test: " << conv.test.size() << " clouds, "
        << conv.train.class_count() << " classes -> " << a.out << '\n';
    return conv.failures.empty() ? 0 : 2;
}

int run_train(const TrainArgs& a, std::ostream& out) {
    if (a.batch == 0) throw UsageError("--batch must be positive");
    if (!(a.lr > 0.0)) throw UsageError("--lr must be positive");
    if (a.threads == 0) throw UsageError("--threads must be positive");
    const Dataset train_set = read_packed(a.train_path);
    const Dataset test_set = read_packed(a.test_path);
    if (train_set.class_names != test_set.class_names)
        throw std::runtime_error("train and test files have different class lists");
    const ModelConfig config = model_config_from(a, train_set.class_count());

    TrainOptions opts;
    opts.epochs = a.epochs;
    opts.lr = a.lr;
    opts.batch_size = a.batch;
    opts.seed = a.seed;
    opts.threads = a.threads;
    opts.cache_graphs = !a.no_graph_cache;
    if (!a.quiet) {
        opts.on_epoch = [&out](const EpochStats& s) {
            out << "epoch " << s.epoch << "  train_loss " << s.train_loss << "  test_loss " << s.test_loss
                << "  inst_acc " << s.instance_accuracy << "  class_acc " << s.class_accuracy << "  (" << s.seconds
                << " s)" << std::endl;
        };
    }

    std::optional<Checkpoint> resume;
    if (!a.resume.empty()) resume = load_checkpoint(a.resume);
    const TrainResult r = train(config, train_set, test_set, opts, resume ? &*resume : nullptr);
    save_checkpoint(a.out_checkpoint, r.checkpoint);
    r.report.write_csv(a.report);
    if (!r.report.epochs.empty()) {
        const auto& last = r.report.epochs.back();
        out << "final: inst_acc " << last.instance_accuracy << " class_acc " << last.class_accuracy << " test_loss "
            << last.test_loss << '\n';
    }
    return 0;
}

void check_dataset_matches(const Checkpoint& ck, const Dataset& data) {
    if (data.class_count() != ck.config.class_count)
        throw std::runtime_error("checkpoint/data mismatch: class_count is " + std::to_string(ck.config.class_count) +
                                 " in the checkpoint but " + std::to_string(data.class_count()) + " in the data");
    if (ck.config.pooling == PoolingMode::Multires && !data.clouds.empty() &&
        data.clouds.front().size() < ck.config.centroid_count)
        throw std::runtime_error("checkpoint/data mismatch: centroid_count " + std::to_string(ck.config.centroid_count) +
                                 " exceeds the point count " + std::to_string(data.clouds.front().size()));
}

int run_eval(const EvalArgs& a, std::ostream& out) {
    const Checkpoint ck = load_checkpoint(a.checkpoint);
    const Dataset data = read_packed(a.data);
    check_dataset_matches(ck, data);
    const EvalResult r = evaluate(ck.params, ck.config, data, a.threads);
    out << "instance accuracy " << r.instance_accuracy << "\nclass accuracy " << r.class_accuracy << "\ntest loss "
        << r.loss << '\n';
    print_confusion(out, r, data.class_names);
    return 0;
}

int run_active(const ActiveArgs& a, std::ostream& out) {
    const Checkpoint ck = load_checkpoint(a.checkpoint);
    const Dataset data = read_packed(a.data);
    check_dataset_matches(ck, data);
    if (a.index >= data.size())
        throw UsageError("--index " + std::to_string(a.index) + " out of range (dataset has " +
                         std::to_string(data.size()) + " clouds)");
    const auto rows = export_active_points(ck, data.clouds[a.index], a.out);
    out << "wrote " << rows.size() << " active points to " << a.out << '\n';
    return 0;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

bool given_on_command_line(const std::vector<std::string>& args, const std::string& flag) {
    return std::any_of(args.begin(), args.end(),
                       [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
}

/// Appends `--key=value` for each config-file entry not already given on
/// the command line, so that flags override the file.
void expand_config_file(const CLI::App& app, std::vector<std::string>& args) {
    if (args.empty()) return;
    const CLI::App* sub = nullptr;
    for (const CLI::App* candidate : app.get_subcommands([](const CLI::App*) { return true; }))
        if (candidate->get_name() == args.front()) sub = candidate;
    if (sub == nullptr) return;

    std::string path;
    for (std::size_t i = 1; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
        else if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
    }
    if (path.empty()) return;

    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config file '" + path + "'");
    std::vector<std::string> extra;
    std::string line;
    for (int number = 1; std::getline(in, line); ++number) {
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        const std::string where = path + ":" + std::to_string(number) + ": ";
        if (eq == std::string::npos) throw UsageError(where + "expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const std::string flag = "--" + key;
        if (key == "config" || key == "help" || sub->get_option_no_throw(flag) == nullptr)
            throw UsageError(where + "unknown key '" + key + "' for '" + sub->get_name() + "'");
        if (!given_on_command_line(args, flag)) extra.push_back(flag + "=" + value);
    }
    args.insert(args.end(), extra.begin(), extra.end());
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Graph-convolutional point-cloud classifier"};
    app.option_defaults()->always_capture_default();
    app.require_subcommand(1);

    std::string config_path;

    SynthArgs synth;
    auto* s = app.add_subcommand("synth", "generate a synthetic primitive-shape dataset");
    s->add_option("--config", config_path, "key = value file providing flag defaults");
    s->add_option("--classes", synth.classes, "comma-separated subset of sphere,cube,cylinder,torus");
    s->add_option("--per-class", synth.per_class, "clouds per class");
    s->add_option("--points", synth.points, "points per cloud");
    s->add_option("--noise", synth.noise, "std of Gaussian coordinate noise");
    s->add_option("--seed", synth.seed, "random seed");
    s->add_option("--out", synth.out, "output packed file")->required();

    PreprocessArgs prep;
    auto* p = app.add_subcommand("preprocess", "convert a <class>/<split>/<file>.off tree to packed files");
    p->add_option("--config", config_path, "key = value file providing flag defaults");
    p->add_option("--in", prep.in, "root of the OFF tree")->required();
    p->add_option("--out", prep.out, "output directory for train.pgc and test.pgc")->required();
    p->add_option("--points", prep.points, "points per object after farthest point sampling");
    p->add_option("--sample", prep.sample, "surface samples drawn per mesh");
    p->add_option("--seed", prep.seed, "random seed");

    TrainArgs tr;
    auto* t = app.add_subcommand("train", "train a model");
    t->add_option("--config", config_path, "key = value file providing flag defaults");
    t->add_option("--train", tr.train_path, "packed training set")->required();
    t->add_option("--test", tr.test_path, "packed test set")->required();
    t->add_option("--pooling", tr.pooling, "global|multires")->check(CLI::IsMember({"global", "multires"}));
    t->add_option("--knn", tr.knn, "neighbours in the kNN graph");
    t->add_option("--order", tr.order, "Chebyshev order K");
    t->add_option("--filters", tr.filters, "filters of the two conv layers, e.g. 1000,1000");
    t->add_option("--centroids", tr.centroids, "centroids for multi-resolution pooling");
    t->add_option("--cluster-k", tr.cluster_k, "cluster size for multi-resolution pooling");
    t->add_option("--cluster-mode", tr.cluster_mode, "knn|partition")->check(CLI::IsMember({"knn", "partition"}));
    t->add_option("--batch", tr.batch, "mini-batch size");
    t->add_option("--epochs", tr.epochs, "total epochs (including resumed ones)");
    t->add_option("--lr", tr.lr, "Adam learning rate");
    t->add_option("--weight-decay", tr.weight_decay, "l2 regularisation coefficient");
    t->add_option("--keep-conv", tr.keep_conv, "dropout keep probability after each conv layer");
    t->add_option("--keep-fc", tr.keep_fc, "dropout keep probability on the FC input");
    t->add_option("--sigma", tr.sigma, "Gaussian kernel width: 'adaptive' or a number");
    t->add_flag("--no-bias", tr.no_bias, "disable conv-layer biases");
    t->add_flag("--multires-concat", tr.multires_concat, "also pool layer 1 globally in multires mode");
    t->add_option("--fps-seed", tr.fps_seed, "seed of the first multires centroid");
    t->add_option("--seed", tr.seed, "random seed (init, shuffling, dropout)");
    t->add_option("--threads", tr.threads, "worker threads; 1 is bit-reproducible");
    t->add_flag("--no-graph-cache", tr.no_graph_cache, "rebuild graphs every epoch instead of caching");
    t->add_flag("--quiet", tr.quiet, "no per-epoch progress");
    t->add_option("--out-checkpoint", tr.out_checkpoint, "checkpoint output path");
    t->add_option("--report", tr.report, "per-epoch CSV report path");
    t->add_option("--resume", tr.resume, "checkpoint to continue from");

    EvalArgs ev;
    auto* e = app.add_subcommand("eval", "evaluate a checkpoint on a packed dataset");
    e->add_option("--config", config_path, "key = value file providing flag defaults");
    e->add_option("--checkpoint", ev.checkpoint, "checkpoint file")->required();
    e->add_option("--data", ev.data, "packed dataset")->required();
    e->add_option("--threads", ev.threads, "worker threads");

    ActiveArgs ac;
    auto* a = app.add_subcommand("active", "export the active points of one cloud as CSV");
    a->add_option("--config", config_path, "key = value file providing flag defaults");
    a->add_option("--checkpoint", ac.checkpoint, "checkpoint file")->required();
    a->add_option("--data", ac.data, "packed dataset")->required();
    a->add_option("--index", ac.index, "cloud index within the dataset");
    a->add_option("--out", ac.out, "CSV output path");

    std::vector<std::string> args(argv + 1, argv + argc);
    try {
        expand_config_file(app, args);
    } catch (const UsageError& ue) {
        err << "error: " << ue.what() << '\n';
        return kUsageError;
    }
    std::reverse(args.begin(), args.end());

    try {
        app.parse(args);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& pe) {
        // sub-command help requests surface as CallForHelp on the sub-app
        err << "error: " << pe.what() << "\nRun with --help for usage.\n";
        return kUsageError;
    }

    try {
        if (s->parsed()) return run_synth(synth, out);
        if (p->parsed()) return run_preprocess(prep, out, err);
        if (t->parsed()) return run_train(tr, out);
        if (e->parsed()) return run_eval(ev, out);
        if (a->parsed()) return run_active(ac, out);
    } catch (const UsageError& ue) {
        err << "error: " << ue.what() << '\n';
        return kUsageError;
    } catch (const std::exception& ex) {
        err << "error: " << ex.what() << '\n';
        return kRuntimeError;
    }
    return kUsageError;
}

}  // namespace pointgcn::cli
