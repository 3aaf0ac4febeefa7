#include "pointgcn/train.hpp"

#include "pointgcn/binary_io.hpp"
#include "pointgcn/random.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>
#include <thread>

namespace pointgcn {

namespace {

/// Splits [0, count) into `threads` contiguous chunks and runs fn(chunk, begin, end)
/// on each, the first chunk on the calling thread.
template <typename Fn>
void parallel_chunks(std::size_t count, std::size_t threads, Fn&& fn) {
    threads = std::max<std::size_t>(1, std::min(threads, count));
    if (threads == 1) {
        fn(std::size_t(0), std::size_t(0), count);
        return;
    }
    std::vector<std::thread> workers;
    std::vector<std::exception_ptr> errors(threads);
    auto run = [&](std::size_t t) {
        const std::size_t begin = count * t / threads, end = count * (t + 1) / threads;
        try {
            fn(t, begin, end);
        } catch (...) {
            errors[t] = std::current_exception();
        }
    };
    for (std::size_t t = 1; t < threads; ++t) workers.emplace_back(run, t);
    run(0);
    for (auto& w : workers) w.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

void accumulate(ModelParams<float>& into, const ModelParams<float>& grads, float scale) {
    auto dst = parameter_refs(into);
    const auto src = parameter_refs(grads);
    for (std::size_t t = 0; t < dst.size(); ++t)
        for (Eigen::Index i = 0; i < dst[t].size(); ++i) dst[t].data[i] += scale * src[t].data[i];
}

int argmax(const Vector<float>& p) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < p.size(); ++i)
        if (p[i] > p[best]) best = i;
    return int(best);
}

/// Graph contexts for a dataset, either built once up front or on demand.
class GraphCache {
public:
    GraphCache(const Dataset& data, const ModelConfig& config, bool cache, std::size_t threads)
        : data_(data), config_(config) {
        if (!cache) return;
        contexts_.resize(data.size());
        parallel_chunks(data.size(), threads, [&](std::size_t, std::size_t b, std::size_t e) {
            for (std::size_t i = b; i < e; ++i) contexts_[i] = build_graph_context<float>(data.clouds[i], config);
        });
    }

    /// Returns a cached context or builds one into `scratch`.
    const GraphContext<float>& get(std::size_t i, GraphContext<float>& scratch) const {
        if (!contexts_.empty()) return contexts_[i];
        scratch = build_graph_context<float>(data_.clouds[i], config_);
        return scratch;
    }

private:
    const Dataset& data_;
    const ModelConfig& config_;
    std::vector<GraphContext<float>> contexts_;
};

EvalResult evaluate_cached(const ModelParams<float>& params, const ModelConfig& config, const Dataset& dataset,
                           const GraphCache& graphs, std::size_t threads) {
    std::vector<int> labels(dataset.size()), preds(dataset.size());
    std::vector<double> losses(dataset.size());
    parallel_chunks(dataset.size(), threads, [&](std::size_t, std::size_t b, std::size_t e) {
        GraphContext<float> scratch;
        for (std::size_t i = b; i < e; ++i) {
            const auto& cloud = dataset.clouds[i];
            if (!cloud.label) throw std::invalid_argument("evaluate: cloud " + std::to_string(i) + " is unlabeled");
            const auto result = forward(graphs.get(i, scratch), cloud, params, config, Mode::Eval);
            labels[i] = *cloud.label;
            preds[i] = argmax(result.probs);
            losses[i] = -std::log(double(result.probs[*cloud.label]) + 1e-12);
        }
    });
    EvalResult r = metrics_from_predictions(labels, preds, config.class_count);
    double sum = 0.0;
    for (double l : losses) sum += l;
    r.loss = dataset.size() ? sum / double(dataset.size()) : 0.0;
    return r;
}

}  // namespace

// ------------------------------------------------------------- reports

std::string TrainReport::to_csv() const {
    std::ostringstream os;
    os << "epoch,train_loss,test_loss,inst_acc,class_acc,seconds\n" << std::setprecision(8);
    for (const auto& e : epochs)
        os << e.epoch << ',' << e.train_loss << ',' << e.test_loss << ',' << e.instance_accuracy << ','
           << e.class_accuracy << ',' << e.seconds << '\n';
    return os.str();
}

void TrainReport::write_csv(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    out << to_csv();
}

// --------------------------------------------------------- checkpoints

namespace {
constexpr char kCheckpointMagic[4] = {'P', 'G', 'C', 'K'};
constexpr std::uint32_t kCheckpointVersion = 1;

void write_tensors(BinaryWriter& w, const std::string& prefix, const ModelParams<float>& p) {
    for (const auto& r : parameter_refs(p)) {
        const std::string name = prefix + r.name;
        w.u16(std::uint16_t(name.size()));
        w.text(name);
        if (r.is_vector) {
            w.u8(1);
            w.u32(std::uint32_t(r.rows));
        } else {
            w.u8(2);
            w.u32(std::uint32_t(r.rows));
            w.u32(std::uint32_t(r.cols));
        }
        w.f32s({r.data, std::size_t(r.size())});
    }
}
}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck) {
    std::ostringstream text;
    text << ck.config.to_text() << std::setprecision(17) << "train.epoch = " << ck.epoch << "\n"
         << "train.seed = " << ck.seed << "\n"
         << "train.lr = " << ck.lr << "\n"
         << "train.batch_size = " << ck.batch_size << "\n"
         << "train.adam_step = " << ck.adam.t << "\n";
    const std::string config_text = text.str();

    BinaryWriter w;
    w.text({kCheckpointMagic, 4});
    w.u32(kCheckpointVersion);
    w.u32(std::uint32_t(config_text.size()));
    w.text(config_text);
    w.u32(std::uint32_t(3 * parameter_refs(ck.params).size()));
    write_tensors(w, "", ck.params);
    write_tensors(w, "adam.m.", ck.adam.m);
    write_tensors(w, "adam.v.", ck.adam.v);
    w.append_crc();
    return w.bytes();
}

Checkpoint decode_checkpoint(std::vector<std::uint8_t> bytes) {
    BinaryReader r(std::move(bytes));
    if (r.remaining() < 4 || r.text(4) != std::string(kCheckpointMagic, 4))
        throw FormatError("checkpoint: bad magic (expected PGCK)");
    r.verify_crc("checkpoint");
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) throw FormatError("checkpoint: unsupported version " + std::to_string(version));

    const std::string text = r.text(r.u32());
    std::string model_text;
    Checkpoint ck;
    {
        std::istringstream is(text);
        std::string line;
        while (std::getline(is, line)) {
            if (line.rfind("train.", 0) != 0) {
                model_text += line + "\n";
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos) throw FormatError("checkpoint: malformed state line '" + line + "'");
            std::string key = line.substr(0, eq), value = line.substr(eq + 1);
            key.erase(key.find_last_not_of(' ') + 1);
            value.erase(0, value.find_first_not_of(' '));
            if (key == "train.epoch") ck.epoch = std::stoull(value);
            else if (key == "train.seed") ck.seed = std::stoull(value);
            else if (key == "train.lr") ck.lr = std::stod(value);
            else if (key == "train.batch_size") ck.batch_size = std::stoull(value);
            else if (key == "train.adam_step") ck.adam.t = std::stoll(value);
            else throw FormatError("checkpoint: unknown state key '" + key + "'");
        }
    }
    try {
        ck.config = ModelConfig::from_text(model_text);
        ck.config.validate();
    } catch (const std::invalid_argument& e) {
        throw FormatError(std::string("checkpoint: ") + e.what());
    }

    ck.params = zeros_like(init_params<float>(ck.config, 0));
    ck.adam = {zeros_like(ck.params), zeros_like(ck.params), ck.adam.t};

    auto find = [&](const std::string& name) -> ParamRef<float> {
        const std::string prefix = name.rfind("adam.m.", 0) == 0 ? "adam.m." : name.rfind("adam.v.", 0) == 0 ? "adam.v." : "";
        ModelParams<float>& target = prefix == "adam.m." ? ck.adam.m : prefix == "adam.v." ? ck.adam.v : ck.params;
        for (auto& ref : parameter_refs(target))
            if (prefix + ref.name == name) return ref;
        throw FormatError("checkpoint: unexpected tensor '" + name + "'");
    };

    const std::uint32_t count = r.u32();
    if (count != 3 * parameter_refs(ck.params).size()) throw FormatError("checkpoint: tensor count mismatch");
    for (std::uint32_t t = 0; t < count; ++t) {
        const std::string name = r.text(r.u16());
        ParamRef<float> ref = find(name);
        const std::uint8_t rank = r.u8();
        std::uint64_t rows = 0, cols = 1;
        if (rank == 1) {
            rows = r.u32();
        } else if (rank == 2) {
            rows = r.u32();
            cols = r.u32();
        } else {
            throw FormatError("checkpoint: tensor '" + name + "' has unsupported rank " + std::to_string(rank));
        }
        if (rows != std::uint64_t(ref.rows) || cols != std::uint64_t(ref.cols))
            throw FormatError("checkpoint: tensor '" + name + "' shape disagrees with the stored config");
        r.f32s({ref.data, std::size_t(ref.size())});
    }
    if (!r.at_end()) throw FormatError("checkpoint: trailing bytes after tensors");
    return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
    write_file_bytes(path, encode_checkpoint(ck));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file_bytes(path)); }

// ---------------------------------------------------------- evaluation

EvalResult metrics_from_predictions(const std::vector<int>& labels, const std::vector<int>& predictions,
                                    std::size_t classes) {
    if (labels.size() != predictions.size()) throw std::invalid_argument("metrics: label/prediction count mismatch");
    EvalResult r;
    r.confusion.assign(classes, std::vector<std::size_t>(classes, 0));
    std::size_t correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || std::size_t(labels[i]) >= classes || predictions[i] < 0 ||
            std::size_t(predictions[i]) >= classes)
            throw std::invalid_argument("metrics: class index out of range");
        ++r.confusion[std::size_t(labels[i])][std::size_t(predictions[i])];
        if (labels[i] == predictions[i]) ++correct;
    }
    r.instance_accuracy = labels.empty() ? 0.0 : double(correct) / double(labels.size());

    double recall_sum = 0.0;
    std::size_t present = 0;
    for (std::size_t c = 0; c < classes; ++c) {
        std::size_t total = 0;
        for (std::size_t value : r.confusion[c]) total += value;
        if (total == 0) continue;
        recall_sum += double(r.confusion[c][c]) / double(total);
        ++present;
    }
    r.class_accuracy = present ? recall_sum / double(present) : 0.0;
    return r;
}

EvalResult evaluate(const ModelParams<float>& params, const ModelConfig& config, const Dataset& dataset,
                    std::size_t threads) {
    check_params(params, config);
    const GraphCache graphs(dataset, config, false, threads);
    return evaluate_cached(params, config, dataset, graphs, threads);
}

// ------------------------------------------------------------- training

TrainResult train(const ModelConfig& config, const Dataset& train_set, const Dataset& test_set,
                  const TrainOptions& options, const Checkpoint* resume_from) {
    config.validate();
    if (train_set.size() == 0 || test_set.size() == 0) throw std::invalid_argument("train: both splits must be non-empty");
    if (train_set.class_count() != config.class_count || test_set.class_count() != config.class_count)
        throw std::invalid_argument("train: dataset class count (" + std::to_string(train_set.class_count()) + "/" +
                                    std::to_string(test_set.class_count()) + ") != config class_count (" +
                                    std::to_string(config.class_count) + ")");
    if (!(options.lr > 0.0)) throw std::invalid_argument("train: learning rate must be positive");
    const ClassWeights cw = class_weights_from_counts(train_set.class_counts());
    test_set.class_counts();  // validates labels

    TrainResult result;
    Checkpoint& ck = result.checkpoint;
    if (resume_from) {
        ck = *resume_from;
        if (ck.config.to_text() != config.to_text())
            throw std::invalid_argument("train: resume checkpoint was written with a different model config");
        check_params(ck.params, config);
    } else {
        ck.config = config;
        ck.params = init_params<float>(config, mix_seed(options.seed, {0}));
        ck.adam = AdamState<float>::zeros(ck.params);
        ck.epoch = 0;
    }
    ck.seed = options.seed;
    ck.lr = options.lr;
    ck.batch_size = options.batch_size;

    const GraphCache train_graphs(train_set, config, options.cache_graphs, options.threads);
    const GraphCache test_graphs(test_set, config, options.cache_graphs, options.threads);
    const AdamOptions adam{options.lr};
    const std::size_t threads = std::max<std::size_t>(1, options.threads);

    for (std::size_t epoch = ck.epoch; epoch < options.epochs; ++epoch) {
        const auto start = std::chrono::steady_clock::now();
        const auto batches = batch_iter(train_set.size(), options.batch_size, mix_seed(options.seed, {1}), epoch);
        double loss_sum = 0.0;

        for (std::size_t b = 0; b < batches.size(); ++b) {
            const auto& batch = batches[b];
            const std::size_t workers = std::min(threads, batch.size());
            std::vector<ModelParams<float>> partial(workers, zeros_like(ck.params));
            std::vector<double> partial_loss(workers, 0.0);
            const float scale = 1.0f / float(batch.size());

            parallel_chunks(batch.size(), workers, [&](std::size_t t, std::size_t begin, std::size_t end) {
                GraphContext<float> scratch;
                for (std::size_t s = begin; s < end; ++s) {
                    const std::size_t idx = batch[s];
                    const PointCloud& cloud = train_set.clouds[idx];
                    auto fwd = forward(train_graphs.get(idx, scratch), cloud, ck.params, config, Mode::Train,
                                       mix_seed(options.seed, {2, epoch, idx}));
                    auto bwd = backward(fwd.cache, *cloud.label, cw, ck.params, config, 0.0);
                    accumulate(partial[t], bwd.grads, scale);
                    partial_loss[t] += bwd.loss;
                }
            });

            ModelParams<float>& grads = partial[0];
            double batch_loss = partial_loss[0];
            for (std::size_t t = 1; t < workers; ++t) {
                accumulate(grads, partial[t], 1.0f);
                batch_loss += partial_loss[t];
            }
            if (!std::isfinite(batch_loss))
                throw std::runtime_error("training diverged: non-finite loss in epoch " + std::to_string(epoch + 1) +
                                         ", batch " + std::to_string(b + 1));
            loss_sum += batch_loss;
            add_weight_decay(grads, ck.params, config.weight_decay);
            adam_step(ck.params, grads, ck.adam, adam);
        }

        const EvalResult eval = evaluate_cached(ck.params, config, test_set, test_graphs, threads);
        ck.epoch = epoch + 1;
        EpochStats stats;
        stats.epoch = epoch + 1;
        stats.train_loss = loss_sum / double(train_set.size());
        stats.test_loss = eval.loss;
        stats.instance_accuracy = eval.instance_accuracy;
        stats.class_accuracy = eval.class_accuracy;
        stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        result.report.epochs.push_back(stats);
        if (options.on_epoch) options.on_epoch(stats);
    }
    return result;
}

StabilityReport stability_run(const ModelConfig& config, const Dataset& train_set, const Dataset& test_set,
                              const TrainOptions& options, const std::vector<std::uint64_t>& seeds) {
    if (seeds.size() < 2) throw std::invalid_argument("stability_run: need at least two seeds");
    StabilityReport report;
    report.seeds = seeds;
    for (std::uint64_t seed : seeds) {
        TrainOptions run = options;
        run.seed = seed;
        TrainResult r = train(config, train_set, test_set, run);
        report.final_accuracy.push_back(r.report.epochs.empty() ? 0.0 : r.report.epochs.back().instance_accuracy);
        report.reports.push_back(std::move(r.report));
    }
    double sum = 0.0;
    for (double a : report.final_accuracy) sum += a;
    report.mean = sum / double(seeds.size());
    double ss = 0.0;
    for (double a : report.final_accuracy) ss += (a - report.mean) * (a - report.mean);
    report.stddev = std::sqrt(ss / double(seeds.size() - 1));
    return report;
}

// -------------------------------------------------------- active points

std::vector<ActivePointRow> extract_active_points(const Checkpoint& ck, const PointCloud& cloud) {
    const GraphContext<float> graph = build_graph_context<float>(cloud, ck.config);
    const auto result = forward(graph, cloud, ck.params, ck.config, Mode::Eval);
    std::vector<ActivePointRow> rows;
    rows.reserve(result.active.size());
    for (const auto& a : result.active) rows.push_back({a, cloud.points.at(a.vertex)});
    return rows;
}

std::string active_points_csv(const std::vector<ActivePointRow>& rows) {
    std::ostringstream os;
    os << "layer,filter,vertex,x,y,z\n" << std::setprecision(9);
    for (const auto& r : rows)
        os << r.point.layer << ',' << r.point.filter << ',' << r.point.vertex << ',' << r.position.x << ','
           << r.position.y << ',' << r.position.z << '\n';
    return os.str();
}

std::vector<ActivePointRow> export_active_points(const Checkpoint& ck, const PointCloud& cloud,
                                                 const std::filesystem::path& path) {
    auto rows = extract_active_points(ck, cloud);
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    out << active_points_csv(rows);
    if (!out) throw std::runtime_error("write to '" + path.string() + "' failed");
    return rows;
}

}  // namespace pointgcn
