#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "sdplab/analysis.hpp"
#include "sdplab/config.hpp"
#include "sdplab/metrics_csv.hpp"
#include "sdplab/report.hpp"
#include "sdplab/trainer.hpp"

namespace sdplab {

constexpr int kExitOk = 0;
constexpr int kExitConfigError = 2;
constexpr int kExitRuntimeError = 3;
constexpr int kExitPartialSweep = 4;

// Sweep cells log from worker threads; serialize writes to stderr.
inline void log_info(const std::string& msg) {
    if (log_level() < LogLevel::info) return;
    static std::mutex mu;
    std::lock_guard<std::mutex> lock(mu);
    log_note(msg);
}

struct CliOptions {
    std::optional<std::uint64_t> seed;
    std::string out;
    bool force = false;
    std::size_t jobs = 1;
};

inline void apply_overrides(ExperimentConfig& cfg, const CliOptions& opts) {
    if (opts.seed) cfg.run.seeds = {*opts.seed};
    if (!opts.out.empty()) cfg.run.out = opts.out;
    cfg.validate();
}

namespace rngtag {
constexpr std::uint64_t dataset = 0x64617461;
constexpr std::uint64_t teacher = 0x74656163;
constexpr std::uint64_t prune = 0x7072756e;
}  // namespace rngtag

inline RngState stream_for(std::uint64_t seed, std::uint64_t tag) {
    return RngState(seed).split(tag);
}

inline void ensure_dir(const std::string& path) {
    std::error_code ec;
    std::filesystem::create_directories(path, ec);
    if (ec) throw IoError("cannot create directory " + path + ": " + ec.message());
}

// Refuse to reuse a non-empty directory unless --force was given.
inline void ensure_fresh_dir(const std::string& path, bool force) {
    namespace fs = std::filesystem;
    std::error_code ec;
    if (fs::exists(path, ec)) {
        if (!fs::is_directory(path, ec))
            throw IoError("output path " + path + " exists and is not a directory");
        if (!fs::is_empty(path, ec) && !force)
            throw IoError("output directory " + path +
                          " is not empty; pass --force to write into it");
    }
    ensure_dir(path);
}

inline DatasetSplits prepare_splits(const ExperimentConfig& cfg, std::uint64_t seed) {
    RngState rng = stream_for(seed, rngtag::dataset);
    LabeledDataset ds = realize_dataset(cfg.dataset, rng);
    SplitSpec spec = cfg.dataset.split;
    spec.seed = seed;
    return split(ds, spec);
}

// ---- gen-data ----

inline int cmd_gen_data(const ExperimentConfig& cfg, const CliOptions& opts) {
    if (cfg.dataset.kind == "csv")
        throw ConfigError("gen-data: dataset kind csv is already a file; use blobs or spirals");
    ensure_fresh_dir(cfg.run.out, opts.force);
    const std::uint64_t seed = cfg.run.seeds.front();
    RngState rng = stream_for(seed, rngtag::dataset);
    const LabeledDataset ds = realize_dataset(cfg.dataset, rng);
    const std::string csv_path = cfg.run.out + "/data.csv";
    save_csv(csv_path, ds, cfg.dataset.label_column);

    // The manifest is itself a loadable config fragment pointing back at the
    // CSV; generator provenance rides along as parseable comments.
    std::ostringstream m;
    m << "# generated dataset manifest\n";
    m << "# generator = " << cfg.dataset.kind << '\n';
    m << "# seed = " << seed << '\n';
    if (cfg.dataset.kind == "blobs") {
        m << "# classes = " << cfg.dataset.classes << '\n';
        m << "# samples_per_class = " << cfg.dataset.samples_per_class << '\n';
        m << "# dim = " << cfg.dataset.dim << '\n';
        m << "# center_spread = " << format_metric(cfg.dataset.center_spread) << '\n';
        m << "# cluster_std = " << format_metric(cfg.dataset.cluster_std) << '\n';
    } else {
        m << "# samples_per_class = " << cfg.dataset.samples_per_class << '\n';
        m << "# noise_std = " << format_metric(cfg.dataset.noise_std) << '\n';
    }
    m << "# rows = " << ds.size() << '\n';
    m << "# class_counts =";
    for (std::size_t c : ds.class_counts()) m << ' ' << c;
    m << '\n';
    m << "\n[dataset]\n";
    m << "kind = csv\n";
    m << "path = " << csv_path << '\n';
    m << "label_column = " << cfg.dataset.label_column << '\n';
    m << "train_fraction = " << format_metric(cfg.dataset.split.train_fraction) << '\n';
    m << "dev_fraction = " << format_metric(cfg.dataset.split.dev_fraction) << '\n';
    m << "test_fraction = " << format_metric(cfg.dataset.split.test_fraction) << '\n';

    const std::string manifest_path = cfg.run.out + "/manifest.ini";
    std::ofstream out(manifest_path);
    if (!out) throw IoError("cannot write " + manifest_path);
    out << m.str();
    if (!out) throw IoError("write failed for " + manifest_path);
    log_info("wrote " + csv_path + " (" + std::to_string(ds.size()) + " rows) and " +
             manifest_path);
    return kExitOk;
}

// ---- train-teacher ----

struct TeacherArtifacts {
    std::string checkpoint;
    double best_dev_accuracy = 0.0;
    std::size_t epochs_run = 0;
    bool stopped_early = false;
};

inline TeacherArtifacts train_teacher_for_seed(const ExperimentConfig& cfg, std::uint64_t seed,
                                               const std::string& out_dir,
                                               MetricsCsvWriter* log_writer) {
    const DatasetSplits splits = prepare_splits(cfg, seed);
    RngState rng = stream_for(seed, rngtag::teacher);
    NetworkState net = make_mlp(rng, network_widths(cfg.network, splits.train));
    net.role = Role::teacher;
    const TeacherResult result = train_teacher(rng, net, splits.train, splits.dev, cfg.train);

    TeacherArtifacts art;
    art.checkpoint = out_dir + "/teacher_seed" + std::to_string(seed) + ".ckpt";
    art.best_dev_accuracy = result.best_dev_accuracy;
    art.epochs_run = result.epochs.size();
    art.stopped_early = result.stopped_early;
    save_checkpoint(net, art.checkpoint);

    if (log_writer) {
        const std::string run_id = "teacher_seed" + std::to_string(seed);
        for (const auto& rec : result.epochs) {
            MetricsRow row;
            row.run_id = run_id;
            row.seed = seed;
            row.method = "dense";
            row.loss_mode = "ce";
            row.step = 0;
            row.remaining_fraction = 1.0;
            row.epoch = rec.epoch;
            row.split = "dev";
            row.accuracy = rec.dev_accuracy;
            row.loss_total = rec.train_loss;
            row.loss_ce = rec.train_loss;
            log_writer->append(row);
        }
        log_writer->flush();
    }
    return art;
}

inline int cmd_train_teacher(const ExperimentConfig& cfg, const CliOptions&) {
    ensure_dir(cfg.run.out);
    for (std::uint64_t seed : cfg.run.seeds) {
        MetricsCsvWriter writer(cfg.run.out + "/teacher_seed" + std::to_string(seed) + ".csv");
        const auto art = train_teacher_for_seed(cfg, seed, cfg.run.out, &writer);
        log_info("teacher seed " + std::to_string(seed) + ": best dev accuracy " +
                 format_metric(art.best_dev_accuracy) + " after " +
                 std::to_string(art.epochs_run) + " epochs" +
                 (art.stopped_early ? " (early stop)" : ""));
    }
    return kExitOk;
}

// ---- prune-run ----

struct AnalysisSnapshot {
    std::optional<double> snr;
    std::optional<double> mi_knn;
    std::optional<double> mi_binned_avg;
    std::optional<double> kde_mi_input;
    std::optional<double> kde_mi_label;
    std::optional<double> overlap_vs_mbp;
    std::optional<double> frob_distortion_total;
    std::optional<double> repr_distance;
};

// Dev-split measurements for one network state. Metrics whose preconditions
// the data cannot meet (class too small, dimension mismatch) are left empty
// rather than failing the run.
inline AnalysisSnapshot analyze_state(const NetworkState& student, const NetworkState& teacher,
                                      const LabeledDataset& dev,
                                      const DenseMatrix& teacher_penultimate,
                                      const AnalysisConfig& acfg) {
    AnalysisSnapshot snap;
    const ForwardTrace trace = forward(student, dev.inputs);
    const DenseMatrix& pen = trace.penultimate();

    const auto counts = dev.class_counts();
    std::size_t min_count = dev.size();
    for (std::size_t c : counts) min_count = std::min(min_count, c);
    if (dev.num_classes >= 2 && min_count >= 2) {
        ClassGroupedEmbeddings groups;
        groups.per_class.assign(dev.num_classes, DenseMatrix(min_count, pen.cols()));
        std::vector<std::size_t> taken(dev.num_classes, 0);
        for (std::size_t i = 0; i < dev.size(); ++i) {
            const std::size_t c = dev.labels[i];
            if (taken[c] >= min_count) continue;
            for (std::size_t j = 0; j < pen.cols(); ++j)
                groups.per_class[c](taken[c], j) = pen(i, j);
            ++taken[c];
        }
        snap.snr = snr(groups, acfg.snr_signed_sqrt);
    }

    if (dev.size() >= acfg.mi.k + 2)
        snap.mi_knn = mi_knn(pen, teacher_penultimate, acfg.mi).nats;
    if (pen.cols() == teacher_penultimate.cols() && dev.size() >= 10)
        snap.mi_binned_avg = mi_binned_avg(pen, teacher_penultimate, acfg.mi);
    if (dev.size() >= 2) {
        const double variance = acfg.kde_variances.front();
        snap.kde_mi_input = kde_mi_input_bound(pen, variance);
        snap.kde_mi_label = kde_mi_label_bound(pen, dev.labels, variance).nats;
    }

    const auto student_masks = masks_of(student);
    snap.overlap_vs_mbp =
        mask_overlap(student_masks, mbp_reference_masks(teacher, student_masks)).overall;
    snap.frob_distortion_total = total_frobenius_distortion(student, teacher);
    if (pen.same_shape(teacher_penultimate))
        snap.repr_distance = representation_distance(teacher_penultimate, pen);
    return snap;
}

namespace detail {

// Streams MetricsRows for one pruning run. Epoch rows are appended as each
// phase completes; a step's post-retraining row lands once the following
// phase has measured it; everything is flushed at step boundaries so an
// interrupted run leaves a readable prefix.
class RunCsvEmitter {
public:
    RunCsvEmitter(const std::string& path, std::string run_id, std::uint64_t seed,
                  std::string method, std::string mode, std::size_t epochs_per_step)
        : writer_(path),
          run_id_(std::move(run_id)),
          seed_(seed),
          method_(std::move(method)),
          mode_(std::move(mode)),
          epochs_per_step_(epochs_per_step) {}

    void on_step(const RunRecord& rec, std::size_t step, const AnalysisSnapshot& snap) {
        write_epoch_rows(rec);
        if (step >= 1) write_post_retrain(rec, step - 1);
        const auto& s = rec.steps[step];
        const double before = step == 0 ? 1.0 : rec.steps[step - 1].remaining_fraction;

        MetricsRow pre = base_row(step);
        pre.remaining_fraction = before;
        pre.epoch = epochs_per_step_;
        pre.split = "pre_prune";
        pre.accuracy = s.pre_prune_accuracy;
        writer_.append(pre);

        MetricsRow post = base_row(step);
        post.remaining_fraction = s.remaining_fraction;
        post.epoch = epochs_per_step_;
        post.split = "post_prune";
        post.accuracy = s.post_prune_accuracy;
        fill_analysis(post, snap);
        writer_.append(post);
        writer_.flush();
    }

    void finish(const RunRecord& rec, const AnalysisSnapshot& final_snap) {
        write_epoch_rows(rec);
        const std::size_t steps = rec.steps.size();
        if (steps >= 1) write_post_retrain(rec, steps - 1);
        MetricsRow row = base_row(steps);
        row.remaining_fraction =
            steps == 0 ? 1.0 : rec.steps[steps - 1].remaining_fraction;
        row.epoch = rec.epochs.empty() ? 0 : rec.epochs.back().epoch;
        row.split = "final";
        row.accuracy = rec.epochs.empty() ? 0.0 : rec.epochs.back().dev_accuracy;
        fill_analysis(row, final_snap);
        writer_.append(row);
        writer_.flush();
    }

private:
    static void fill_analysis(MetricsRow& row, const AnalysisSnapshot& snap) {
        row.snr = snap.snr;
        row.mi_knn = snap.mi_knn;
        row.mi_binned_avg = snap.mi_binned_avg;
        row.kde_mi_input = snap.kde_mi_input;
        row.kde_mi_label = snap.kde_mi_label;
        row.overlap_vs_mbp = snap.overlap_vs_mbp;
        row.frob_distortion_total = snap.frob_distortion_total;
        row.repr_distance = snap.repr_distance;
    }

    MetricsRow base_row(std::size_t step) const {
        MetricsRow row;
        row.run_id = run_id_;
        row.seed = seed_;
        row.method = method_;
        row.loss_mode = mode_;
        row.step = step;
        return row;
    }

    void write_epoch_rows(const RunRecord& rec) {
        for (; epochs_written_ < rec.epochs.size(); ++epochs_written_) {
            const auto& e = rec.epochs[epochs_written_];
            MetricsRow row = base_row(e.step);
            row.remaining_fraction =
                e.step == 0 ? 1.0 : rec.steps[e.step - 1].remaining_fraction;
            row.epoch = e.epoch;
            row.split = "dev";
            row.accuracy = e.dev_accuracy;
            row.loss_total = e.loss_total;
            row.loss_ce = e.loss_ce;
            row.loss_kld = e.loss_kld;
            row.loss_cc = e.loss_cc;
            writer_.append(row);
        }
    }

    void write_post_retrain(const RunRecord& rec, std::size_t step) {
        const auto& s = rec.steps[step];
        MetricsRow row = base_row(step);
        row.remaining_fraction = s.remaining_fraction;
        row.epoch = s.recovery_epochs;
        row.split = "post_retrain";
        row.accuracy = s.post_retrain_accuracy;
        row.recovery_epochs = s.recovery_epochs;
        writer_.append(row);
    }

    MetricsCsvWriter writer_;
    std::string run_id_;
    std::uint64_t seed_;
    std::string method_;
    std::string mode_;
    std::size_t epochs_per_step_;
    std::size_t epochs_written_ = 0;
};

inline double median_of(std::vector<double> values) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 ? values[n / 2] : (values[n / 2 - 1] + values[n / 2]) / 2.0;
}

}  // namespace detail

struct CellSummary {
    std::string run_id;
    double final_accuracy = 0.0;
    double final_remaining = 1.0;
    std::optional<double> final_mi_knn;
    std::optional<double> final_snr;
    std::optional<double> median_recovery;
    std::string metrics_path;
    std::string student_checkpoint;
};

inline CellSummary run_prune_cell(const ExperimentConfig& cfg, std::uint64_t seed,
                                  const std::string& out_dir,
                                  const std::string& teacher_checkpoint) {
    const DatasetSplits splits = prepare_splits(cfg, seed);
    NetworkState teacher = load_checkpoint(teacher_checkpoint);
    teacher.role = Role::teacher;
    if (teacher.input_dim() != splits.train.dim() ||
        teacher.output_dim() != splits.train.num_classes)
        throw DimensionError("teacher checkpoint expects " +
                             std::to_string(teacher.input_dim()) + "-dim inputs with " +
                             std::to_string(teacher.output_dim()) + " classes; dataset has " +
                             std::to_string(splits.train.dim()) + "/" +
                             std::to_string(splits.train.num_classes));

    const std::string method = prune_method_name(cfg.prune.method);
    const std::string mode = loss_mode_name(cfg.loss.mode);
    const std::string base = cfg.run.run_id.empty() ? method + "_" + mode : cfg.run.run_id;
    const std::string run_id = base + "_seed" + std::to_string(seed);

    CellSummary cell;
    cell.run_id = run_id;
    cell.metrics_path = out_dir + "/metrics_" + run_id + ".csv";
    cell.student_checkpoint = out_dir + "/student_" + run_id + ".ckpt";

    const ForwardTrace teacher_trace = forward(teacher, splits.dev.inputs);
    const DenseMatrix teacher_pen = teacher_trace.penultimate();

    detail::RunCsvEmitter emitter(cell.metrics_path, run_id, seed, method, mode,
                                  cfg.prune.schedule.epochs_per_step);
    const auto observer = [&](const NetworkState& student, const RunRecord& rec,
                              std::size_t step) {
        const auto snap = analyze_state(student, teacher, splits.dev, teacher_pen, cfg.analysis);
        emitter.on_step(rec, step, snap);
        log_debug(run_id + ": step " + std::to_string(step) + " remaining " +
                  format_metric(rec.steps[step].remaining_fraction));
    };

    RngState rng = stream_for(seed, rngtag::prune);
    PruneRunResult result =
        iterative_prune(rng, teacher, splits.train, splits.dev, cfg.prune.method, cfg.loss.mode,
                        cfg.prune.schedule, cfg.train, cfg.loss.weights, observer);

    const auto final_snap =
        analyze_state(result.student, teacher, splits.dev, teacher_pen, cfg.analysis);
    emitter.finish(result.record, final_snap);
    save_checkpoint(result.student, cell.student_checkpoint);
    {
        const std::string log_path = out_dir + "/run_" + run_id + ".log";
        std::ofstream out(log_path);
        if (!out) throw IoError("cannot write " + log_path);
        out << serialize_run_record(result.record);
    }

    cell.final_accuracy =
        result.record.epochs.empty() ? 0.0 : result.record.epochs.back().dev_accuracy;
    cell.final_remaining = count_remaining(result.student).fraction;
    cell.final_mi_knn = final_snap.mi_knn;
    cell.final_snr = final_snap.snr;
    std::vector<double> recoveries;
    for (const auto& s : result.record.steps)
        recoveries.push_back(static_cast<double>(s.recovery_epochs));
    if (!recoveries.empty()) cell.median_recovery = detail::median_of(recoveries);
    return cell;
}

inline int cmd_prune_run(const ExperimentConfig& cfg, const CliOptions&) {
    ensure_dir(cfg.run.out);
    for (std::uint64_t seed : cfg.run.seeds) {
        const std::string teacher_ckpt =
            cfg.run.teacher_checkpoint.empty()
                ? cfg.run.out + "/teacher_seed" + std::to_string(seed) + ".ckpt"
                : cfg.run.teacher_checkpoint;
        if (!std::filesystem::exists(teacher_ckpt))
            throw IoError("teacher checkpoint " + teacher_ckpt +
                          " not found; run train-teacher first");
        const auto cell = run_prune_cell(cfg, seed, cfg.run.out, teacher_ckpt);
        log_info(cell.run_id + ": final dev accuracy " + format_metric(cell.final_accuracy) +
                 " at remaining fraction " + format_metric(cell.final_remaining));
    }
    return kExitOk;
}

// ---- sweep ----

inline int cmd_sweep(const ExperimentConfig& cfg, const CliOptions& opts) {
    if (cfg.sweep.methods.empty() || cfg.sweep.modes.empty())
        throw ConfigError("sweep: [sweep] must list at least one method and one mode");
    ensure_fresh_dir(cfg.run.out, opts.force);

    struct Cell {
        PruneMethod method;
        LossMode mode;
        std::uint64_t seed;
        std::string dir;
        std::string name;
    };
    std::vector<Cell> cells;
    for (PruneMethod method : cfg.sweep.methods)
        for (LossMode mode : cfg.sweep.modes)
            for (std::uint64_t seed : cfg.run.seeds) {
                const std::string name = std::string(prune_method_name(method)) + "_" +
                                         loss_mode_name(mode) + "_seed" +
                                         std::to_string(seed);
                cells.push_back({method, mode, seed, cfg.run.out + "/" + name, name});
            }

    struct Outcome {
        bool ok = false;
        std::string error;
        CellSummary summary;
    };
    std::vector<Outcome> outcomes(cells.size());
    std::atomic<std::size_t> cursor{0};
    const auto worker = [&] {
        for (;;) {
            const std::size_t i = cursor.fetch_add(1);
            if (i >= cells.size()) return;
            const Cell& cell = cells[i];
            try {
                ensure_dir(cell.dir);
                ExperimentConfig local = cfg;
                local.prune.method = cell.method;
                local.loss.mode = cell.mode;
                local.run.run_id.clear();
                const auto teacher = train_teacher_for_seed(local, cell.seed, cell.dir, nullptr);
                outcomes[i].summary =
                    run_prune_cell(local, cell.seed, cell.dir, teacher.checkpoint);
                outcomes[i].ok = true;
                log_info("cell " + cell.name + ": final dev accuracy " +
                         format_metric(outcomes[i].summary.final_accuracy));
            } catch (const std::exception& e) {
                outcomes[i].error = e.what();
                log_info("cell " + cell.name + " failed: " + outcomes[i].error);
            }
        }
    };

    const std::size_t jobs = std::max<std::size_t>(1, opts.jobs);
    const std::size_t n_threads = std::min(jobs, cells.size());
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    // Single-threaded aggregation in grid order, so concurrency cannot
    // reorder the file.
    const std::string agg_path = cfg.run.out + "/aggregate.csv";
    std::ofstream agg(agg_path);
    if (!agg) throw IoError("cannot write " + agg_path);
    agg << "kind,method,loss_mode,seed,status,error,final_dev_accuracy,"
           "final_remaining_fraction,final_mi_knn,final_snr,median_recovery_epochs,"
           "accuracy_mean,accuracy_std\n";
    const auto sanitize = [](std::string s) {
        for (char& c : s)
            if (c == ',' || c == '\n' || c == '\r') c = ';';
        return s;
    };
    const auto opt_cell = [](const std::optional<double>& v) {
        return v ? format_metric(*v) : std::string();
    };
    for (std::size_t i = 0; i < cells.size(); ++i) {
        const Cell& cell = cells[i];
        const Outcome& res = outcomes[i];
        agg << "cell," << prune_method_name(cell.method) << ',' << loss_mode_name(cell.mode)
            << ',' << cell.seed << ',' << (res.ok ? "ok" : "failed") << ','
            << sanitize(res.error) << ',';
        if (res.ok)
            agg << format_metric(res.summary.final_accuracy) << ','
                << format_metric(res.summary.final_remaining) << ','
                << opt_cell(res.summary.final_mi_knn) << ',' << opt_cell(res.summary.final_snr)
                << ',' << opt_cell(res.summary.median_recovery);
        else
            agg << ",,,,";
        agg << ",,\n";
    }
    bool any_failed = false;
    for (const auto& res : outcomes) any_failed = any_failed || !res.ok;
    for (PruneMethod method : cfg.sweep.methods)
        for (LossMode mode : cfg.sweep.modes) {
            std::vector<double> accs;
            for (std::size_t i = 0; i < cells.size(); ++i)
                if (outcomes[i].ok && cells[i].method == method && cells[i].mode == mode)
                    accs.push_back(outcomes[i].summary.final_accuracy);
            if (accs.empty()) continue;
            double mean = 0.0;
            for (double a : accs) mean += a;
            mean /= static_cast<double>(accs.size());
            double var = 0.0;
            for (double a : accs) var += (a - mean) * (a - mean);
            const double std_dev =
                accs.size() > 1 ? std::sqrt(var / static_cast<double>(accs.size() - 1)) : 0.0;
            agg << "summary," << prune_method_name(method) << ',' << loss_mode_name(mode)
                << ",,,,,,,,," << format_metric(mean) << ',' << format_metric(std_dev) << '\n';
        }
    agg.flush();
    if (!agg) throw IoError("write failed for " + agg_path);
    log_info("sweep aggregate written to " + agg_path);
    return any_failed ? kExitPartialSweep : kExitOk;
}

// ---- report ----

inline int cmd_report(const std::vector<std::string>& csv_paths, const std::string& out_dir) {
    if (csv_paths.empty()) throw ConfigError("report: need at least one metrics CSV");
    std::vector<MetricsRow> rows;
    for (const auto& path : csv_paths) {
        auto part = read_metrics_csv(path);
        rows.insert(rows.end(), part.begin(), part.end());
    }
    if (rows.empty()) {
        std::string joined;
        for (const auto& p : csv_paths) joined += (joined.empty() ? "" : ", ") + p;
        throw ValueError("report: no data rows in " + joined);
    }
    ensure_dir(out_dir);
    const ReportPaths paths = write_report(rows, out_dir);
    log_info("wrote " + paths.accuracy_chart + ", " + paths.recovery_chart + ", " +
             paths.information_chart);
    return kExitOk;
}

}  // namespace sdplab
