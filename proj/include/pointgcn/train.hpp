#ifndef POINTGCN_TRAIN_HPP
#define POINTGCN_TRAIN_HPP

#include "pointgcn/data.hpp"
#include "pointgcn/model.hpp"
#include "pointgcn/optim.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace pointgcn {

struct EpochStats {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double test_loss = 0.0;
    double instance_accuracy = 0.0;
    double class_accuracy = 0.0;
    double seconds = 0.0;
};

struct TrainReport {
    std::vector<EpochStats> epochs;

    /// `epoch,train_loss,test_loss,inst_acc,class_acc,seconds`
    std::string to_csv() const;
    void write_csv(const std::filesystem::path& path) const;
};

struct TrainOptions {
    std::size_t epochs = 100;  // total epochs, counting those in a resumed checkpoint
    double lr = 1e-3;
    std::size_t batch_size = 28;
    std::uint64_t seed = 0;
    std::size_t threads = 1;
    bool cache_graphs = true;
    std::function<void(const EpochStats&)> on_epoch;
};

struct Checkpoint {
    ModelConfig config;
    ModelParams<float> params;
    AdamState<float> adam;
    std::size_t epoch = 0;  // completed epochs
    std::uint64_t seed = 0;
    double lr = 1e-3;
    std::size_t batch_size = 28;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(std::vector<std::uint8_t> bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct EvalResult {
    double instance_accuracy = 0.0;
    double class_accuracy = 0.0;  // mean per-class recall over classes present
    double loss = 0.0;            // mean unweighted cross-entropy
    std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
};

EvalResult metrics_from_predictions(const std::vector<int>& labels, const std::vector<int>& predictions,
                                    std::size_t classes);

EvalResult evaluate(const ModelParams<float>& params, const ModelConfig& config, const Dataset& dataset,
                    std::size_t threads = 1);

struct TrainResult {
    TrainReport report;
    Checkpoint checkpoint;
};

/// Mini-batch Adam on class-weighted cross-entropy with l2 decay; the
/// test split is evaluated after every epoch. Passing `resume_from`
/// continues that run up to options.epochs.
TrainResult train(const ModelConfig& config, const Dataset& train_set, const Dataset& test_set,
                  const TrainOptions& options, const Checkpoint* resume_from = nullptr);

struct StabilityReport {
    std::vector<std::uint64_t> seeds;
    std::vector<double> final_accuracy;  // instance accuracy on the test set
    double mean = 0.0;
    double stddev = 0.0;  // sample standard deviation
    std::vector<TrainReport> reports;
};

StabilityReport stability_run(const ModelConfig& config, const Dataset& train_set, const Dataset& test_set,
                              const TrainOptions& options, const std::vector<std::uint64_t>& seeds);

struct ActivePointRow {
    ActivePoint point;
    Point3 position;
};

/// Eval-mode forward on `cloud`, one row per filter of every globally pooled layer.
std::vector<ActivePointRow> extract_active_points(const Checkpoint& checkpoint, const PointCloud& cloud);
std::string active_points_csv(const std::vector<ActivePointRow>& rows);
std::vector<ActivePointRow> export_active_points(const Checkpoint& checkpoint, const PointCloud& cloud,
                                                 const std::filesystem::path& path);

}  // namespace pointgcn

#endif  // POINTGCN_TRAIN_HPP
