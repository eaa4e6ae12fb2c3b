#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "sdplab/errors.hpp"
#include "sdplab/losses.hpp"
#include "sdplab/analysis.hpp"
#include "sdplab/pruning.hpp"
#include "sdplab/trainer.hpp"

namespace sdplab {

// Flat INI: [section] headers and key = value lines. Comments start the
// line with '#' or ';'. No nesting, no quoting, no inline comments; every
// diagnostic carries file:line so misconfigurations are findable.

struct IniEntry {
    std::string key;
    std::string value;
    std::size_t line = 0;
    mutable bool consumed = false;
};

struct IniSection {
    std::string name;
    std::size_t line = 0;
    std::vector<IniEntry> entries;
};

struct IniFile {
    std::string source;
    std::vector<IniSection> sections;

    const IniSection* find(const std::string& name) const {
        for (const auto& s : sections)
            if (s.name == name) return &s;
        return nullptr;
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

inline std::string where(const IniFile& f, std::size_t line) {
    return f.source + ":" + std::to_string(line) + ": ";
}

}  // namespace detail

inline IniFile parse_ini(const std::string& text, const std::string& source_name) {
    IniFile file;
    file.source = source_name;
    std::istringstream in(text);
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const std::string line = detail::trim(raw);
        if (line.empty() || line.front() == '#' || line.front() == ';') continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError(detail::where(file, line_no) + "unterminated section header");
            const std::string name = detail::trim(line.substr(1, line.size() - 2));
            if (name.empty())
                throw ConfigError(detail::where(file, line_no) + "empty section name");
            if (file.find(name))
                throw ConfigError(detail::where(file, line_no) + "duplicate section [" + name +
                                  "]");
            file.sections.push_back({name, line_no, {}});
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(detail::where(file, line_no) + "expected 'key = value', got '" +
                              line + "'");
        if (file.sections.empty())
            throw ConfigError(detail::where(file, line_no) + "key outside any [section]");
        IniEntry entry;
        entry.key = detail::trim(line.substr(0, eq));
        entry.value = detail::trim(line.substr(eq + 1));
        entry.line = line_no;
        if (entry.key.empty())
            throw ConfigError(detail::where(file, line_no) + "empty key");
        for (const auto& prev : file.sections.back().entries)
            if (prev.key == entry.key)
                throw ConfigError(detail::where(file, line_no) + "duplicate key '" + entry.key +
                                  "' in [" + file.sections.back().name + "]");
        file.sections.back().entries.push_back(std::move(entry));
    }
    return file;
}

inline IniFile load_ini(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_ini(buf.str(), path);
}

// Typed access to one section. Getters consume entries; finish() rejects
// whatever was never consumed, so every key must be known to some reader.
class SectionReader {
public:
    SectionReader(const IniFile& file, const std::string& name)
        : file_(file), section_(file.find(name)), name_(name) {}

    bool present() const { return section_ != nullptr; }

    std::string get_string(const std::string& key, const std::string& fallback) const {
        const IniEntry* e = take(key);
        return e ? e->value : fallback;
    }

    std::string require_string(const std::string& key) const {
        const IniEntry* e = take(key);
        if (!e)
            throw ConfigError(file_.source + ": [" + name_ + "] missing required key '" + key +
                              "'");
        return e->value;
    }

    double get_double(const std::string& key, double fallback) const {
        const IniEntry* e = take(key);
        return e ? parse_double(*e) : fallback;
    }

    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
        const IniEntry* e = take(key);
        return e ? parse_u64(*e) : fallback;
    }

    std::size_t get_size(const std::string& key, std::size_t fallback) const {
        return static_cast<std::size_t>(get_u64(key, fallback));
    }

    bool get_bool(const std::string& key, bool fallback) const {
        const IniEntry* e = take(key);
        if (!e) return fallback;
        if (e->value == "true" || e->value == "1") return true;
        if (e->value == "false" || e->value == "0") return false;
        throw ConfigError(at(*e) + "expected true/false for '" + key + "', got '" + e->value +
                          "'");
    }

    std::vector<double> get_doubles(const std::string& key,
                                    const std::vector<double>& fallback) const {
        const IniEntry* e = take(key);
        if (!e) return fallback;
        std::vector<double> out;
        for (const auto& tok : tokens(*e)) out.push_back(parse_double_token(*e, tok));
        return out;
    }

    std::vector<std::uint64_t> get_u64s(const std::string& key,
                                        const std::vector<std::uint64_t>& fallback) const {
        const IniEntry* e = take(key);
        if (!e) return fallback;
        std::vector<std::uint64_t> out;
        for (const auto& tok : tokens(*e)) out.push_back(parse_u64_token(*e, tok));
        return out;
    }

    std::vector<std::string> get_strings(const std::string& key,
                                         const std::vector<std::string>& fallback) const {
        const IniEntry* e = take(key);
        return e ? tokens(*e) : fallback;
    }

    void finish() const {
        if (!section_) return;
        for (const auto& e : section_->entries)
            if (!e.consumed)
                throw ConfigError(at(e) + "key '" + e.key + "' is not valid in [" + name_ + "]");
    }

private:
    const IniEntry* take(const std::string& key) const {
        if (!section_) return nullptr;
        for (const auto& e : section_->entries)
            if (e.key == key) {
                e.consumed = true;
                return &e;
            }
        return nullptr;
    }

    std::string at(const IniEntry& e) const { return detail::where(file_, e.line); }

    double parse_double(const IniEntry& e) const { return parse_double_token(e, e.value); }

    double parse_double_token(const IniEntry& e, const std::string& tok) const {
        double v = 0.0;
        const char* end = tok.data() + tok.size();
        auto [p, ec] = std::from_chars(tok.data(), end, v);
        if (ec != std::errc{} || p != end)
            throw ConfigError(at(e) + "expected a number for '" + e.key + "', got '" + tok +
                              "'");
        return v;
    }

    std::uint64_t parse_u64(const IniEntry& e) const { return parse_u64_token(e, e.value); }

    std::uint64_t parse_u64_token(const IniEntry& e, const std::string& tok) const {
        std::uint64_t v = 0;
        const char* end = tok.data() + tok.size();
        auto [p, ec] = std::from_chars(tok.data(), end, v);
        if (ec != std::errc{} || p != end)
            throw ConfigError(at(e) + "expected a non-negative integer for '" + e.key +
                              "', got '" + tok + "'");
        return v;
    }

    std::vector<std::string> tokens(const IniEntry& e) const {
        std::vector<std::string> out;
        std::string cur;
        for (char c : e.value) {
            if (c == ' ' || c == '\t' || c == ',') {
                if (!cur.empty()) out.push_back(std::move(cur));
                cur.clear();
            } else {
                cur.push_back(c);
            }
        }
        if (!cur.empty()) out.push_back(std::move(cur));
        if (out.empty())
            throw ConfigError(at(e) + "expected at least one value for '" + e.key + "'");
        return out;
    }

    const IniFile& file_;
    const IniSection* section_;
    std::string name_;
};

struct DatasetConfig {
    std::string kind = "blobs";  // blobs | spirals | csv
    std::size_t classes = 4;
    std::size_t samples_per_class = 500;
    std::size_t dim = 16;
    double center_spread = 3.0;
    double cluster_std = 1.0;
    double noise_std = 0.2;
    std::string path;
    std::string label_column = "label";
    SplitSpec split;
};

struct NetworkConfig {
    std::vector<std::size_t> hidden = {64, 64};
    std::string activation = "relu";
};

struct PruneConfig {
    PruneMethod method = PruneMethod::mbp;
    ScheduleConfig schedule;
    double reg_coef = 1e-4;
    double l0_penalty = 1e-3;
    double gate_init = 2.0;
    double lambda_fdm = 1.0;
    bool cache_teacher = true;
};

struct LossConfig {
    LossMode mode = LossMode::ce;
    LossWeights weights;
};

struct AnalysisConfig {
    MiEstimatorConfig mi;
    std::vector<double> kde_variances = {1.0};
    bool snr_signed_sqrt = true;

    void validate() const {
        mi.validate();
        if (kde_variances.empty())
            throw ConfigError("analysis: kde_variances must not be empty");
        for (double v : kde_variances)
            if (!(v > 0.0)) throw ConfigError("analysis: kde variances must be > 0");
    }
};

struct RunConfig {
    std::vector<std::uint64_t> seeds = {1};
    std::string out = "runs/out";
    std::string run_id;              // defaults to <method>_<mode>_seed<seed>
    std::string teacher_checkpoint;  // defaults to <out>/teacher.ckpt
};

struct SweepConfig {
    std::vector<PruneMethod> methods;
    std::vector<LossMode> modes;
};

struct ExperimentConfig {
    DatasetConfig dataset;
    NetworkConfig network;
    TrainConfig train;  // [teacher] hyperparameters shared with retraining
    PruneConfig prune;
    LossConfig loss;
    AnalysisConfig analysis;
    RunConfig run;
    SweepConfig sweep;

    void validate() const {
        if (dataset.kind != "blobs" && dataset.kind != "spirals" && dataset.kind != "csv")
            throw ConfigError("dataset: kind must be blobs, spirals, or csv, got '" +
                              dataset.kind + "'");
        if (dataset.kind == "csv" && dataset.path.empty())
            throw ConfigError("dataset: kind csv requires 'path'");
        dataset.split.validate();
        if (network.activation != "relu")
            throw ConfigError("network: only relu hidden activation is supported, got '" +
                              network.activation + "'");
        for (std::size_t w : network.hidden)
            if (w == 0) throw ConfigError("network: zero hidden width");
        try {
            train.validate();
            prune.schedule.validate();
            loss.weights.validate();
        } catch (const ValueError& e) {
            throw ConfigError(e.what());
        }
        analysis.validate();
        if (run.seeds.empty()) throw ConfigError("run: seeds must not be empty");
        for (std::size_t i = 0; i < run.seeds.size(); ++i)
            for (std::size_t j = i + 1; j < run.seeds.size(); ++j)
                if (run.seeds[i] == run.seeds[j])
                    throw ConfigError("run: duplicate seed " + std::to_string(run.seeds[i]));
        if (run.out.empty()) throw ConfigError("run: output directory must not be empty");
    }
};

namespace detail {

inline DatasetConfig read_dataset(const IniFile& file) {
    SectionReader s(file, "dataset");
    DatasetConfig d;
    d.kind = s.get_string("kind", d.kind);
    if (d.kind == "blobs") {
        d.classes = s.get_size("classes", d.classes);
        d.samples_per_class = s.get_size("samples_per_class", d.samples_per_class);
        d.dim = s.get_size("dim", d.dim);
        d.center_spread = s.get_double("center_spread", d.center_spread);
        d.cluster_std = s.get_double("cluster_std", d.cluster_std);
    } else if (d.kind == "spirals") {
        d.samples_per_class = s.get_size("samples_per_class", d.samples_per_class);
        d.noise_std = s.get_double("noise_std", d.noise_std);
    } else if (d.kind == "csv") {
        d.path = s.get_string("path", d.path);
        d.label_column = s.get_string("label_column", d.label_column);
    }
    d.split.train_fraction = s.get_double("train_fraction", d.split.train_fraction);
    d.split.dev_fraction = s.get_double("dev_fraction", d.split.dev_fraction);
    d.split.test_fraction = s.get_double("test_fraction", d.split.test_fraction);
    s.finish();
    return d;
}

inline PruneMethod parse_method(const std::string& name) {
    try {
        return prune_method_from_name(name);
    } catch (const ValueError& e) {
        throw ConfigError(e.what());
    }
}

inline LossMode parse_mode(const std::string& name) {
    try {
        return loss_mode_from_name(name);
    } catch (const ValueError& e) {
        throw ConfigError(e.what());
    }
}

}  // namespace detail

inline ExperimentConfig build_experiment_config(const IniFile& file) {
    ExperimentConfig cfg;
    cfg.dataset = detail::read_dataset(file);

    SectionReader net(file, "network");
    {
        std::vector<std::uint64_t> fallback(cfg.network.hidden.begin(),
                                            cfg.network.hidden.end());
        const auto widths = net.get_u64s("hidden", fallback);
        cfg.network.hidden.assign(widths.begin(), widths.end());
        cfg.network.activation = net.get_string("activation", cfg.network.activation);
        net.finish();
    }

    SectionReader teacher(file, "teacher");
    cfg.train.epochs = teacher.get_size("epochs", cfg.train.epochs);
    cfg.train.batch_size = teacher.get_size("batch_size", cfg.train.batch_size);
    cfg.train.learning_rate = teacher.get_double("learning_rate", cfg.train.learning_rate);
    cfg.train.momentum = teacher.get_double("momentum", cfg.train.momentum);
    cfg.train.clip_norm = teacher.get_double("clip_norm", cfg.train.clip_norm);
    cfg.train.label_smoothing = teacher.get_double("label_smoothing", cfg.train.label_smoothing);
    cfg.train.patience = teacher.get_size("patience", cfg.train.patience);
    cfg.train.min_delta = teacher.get_double("min_delta", cfg.train.min_delta);
    teacher.finish();

    SectionReader prune(file, "prune");
    cfg.prune.method = detail::parse_method(prune.get_string("method", "mbp"));
    {
        const std::string kind = prune.get_string("schedule", "uniform");
        if (kind == "uniform")
            cfg.prune.schedule.kind = ScheduleKind::uniform;
        else if (kind == "cubic")
            cfg.prune.schedule.kind = ScheduleKind::cubic;
        else
            throw ConfigError("prune: schedule must be uniform or cubic, got '" + kind + "'");
    }
    cfg.prune.schedule.num_prune_steps =
        prune.get_size("steps", cfg.prune.schedule.num_prune_steps);
    cfg.prune.schedule.fraction_per_step =
        prune.get_double("fraction_per_step", cfg.prune.schedule.fraction_per_step);
    cfg.prune.schedule.epochs_per_step =
        prune.get_size("epochs_per_step", cfg.prune.schedule.epochs_per_step);
    cfg.prune.schedule.final_density =
        prune.get_double("final_density", cfg.prune.schedule.final_density);
    cfg.prune.reg_coef = prune.get_double("reg_coef", cfg.prune.reg_coef);
    cfg.prune.l0_penalty = prune.get_double("l0_penalty", cfg.prune.l0_penalty);
    cfg.prune.gate_init = prune.get_double("gate_init", cfg.prune.gate_init);
    cfg.prune.lambda_fdm = prune.get_double("lambda_fdm", cfg.prune.lambda_fdm);
    cfg.prune.cache_teacher = prune.get_bool("cache_teacher", cfg.prune.cache_teacher);
    prune.finish();
    cfg.train.reg_coef = cfg.prune.reg_coef;
    cfg.train.l0_penalty = cfg.prune.l0_penalty;
    cfg.train.gate_init = cfg.prune.gate_init;
    cfg.train.lambda_fdm = cfg.prune.lambda_fdm;
    cfg.train.cache_teacher = cfg.prune.cache_teacher;

    SectionReader loss(file, "loss");
    cfg.loss.mode = detail::parse_mode(loss.get_string("mode", "ce"));
    cfg.loss.weights.alpha = loss.get_double("alpha", cfg.loss.weights.alpha);
    cfg.loss.weights.beta = loss.get_double("beta", cfg.loss.weights.beta);
    cfg.loss.weights.lambda_offdiag =
        loss.get_double("lambda_offdiag", cfg.loss.weights.lambda_offdiag);
    cfg.loss.weights.temperature = loss.get_double("temperature", cfg.loss.weights.temperature);
    cfg.loss.weights.label_smoothing =
        loss.get_double("label_smoothing", cfg.loss.weights.label_smoothing);
    {
        const std::string kld = loss.get_string("kld_mode", "eq1_style");
        if (kld == "eq1_style")
            cfg.loss.weights.kld_mode = KldCoefficientMode::eq1_style;
        else if (kld == "literal_eq3")
            cfg.loss.weights.kld_mode = KldCoefficientMode::literal_eq3;
        else
            throw ConfigError("loss: kld_mode must be eq1_style or literal_eq3, got '" + kld +
                              "'");
    }
    loss.finish();

    SectionReader analysis(file, "analysis");
    cfg.analysis.mi.k = analysis.get_size("mi_k", cfg.analysis.mi.k);
    cfg.analysis.mi.bins = analysis.get_size("mi_bins", cfg.analysis.mi.bins);
    cfg.analysis.mi.smoothing = analysis.get_double("mi_smoothing", cfg.analysis.mi.smoothing);
    cfg.analysis.kde_variances = analysis.get_doubles("kde_variances", cfg.analysis.kde_variances);
    cfg.analysis.snr_signed_sqrt =
        analysis.get_bool("snr_signed_sqrt", cfg.analysis.snr_signed_sqrt);
    analysis.finish();

    SectionReader run(file, "run");
    cfg.run.seeds = run.get_u64s("seeds", cfg.run.seeds);
    cfg.run.out = run.get_string("out", cfg.run.out);
    cfg.run.run_id = run.get_string("run_id", cfg.run.run_id);
    cfg.run.teacher_checkpoint =
        run.get_string("teacher_checkpoint", cfg.run.teacher_checkpoint);
    run.finish();

    SectionReader sweep(file, "sweep");
    for (const auto& name : sweep.get_strings("methods", {}))
        cfg.sweep.methods.push_back(detail::parse_method(name));
    for (const auto& name : sweep.get_strings("modes", {}))
        cfg.sweep.modes.push_back(detail::parse_mode(name));
    sweep.finish();

    for (const auto& section : file.sections) {
        static const char* known[] = {"dataset", "network", "teacher", "prune",
                                      "loss",    "analysis", "run",    "sweep"};
        bool ok = false;
        for (const char* k : known) ok = ok || section.name == k;
        if (!ok)
            throw ConfigError(detail::where(file, section.line) + "unknown section [" +
                              section.name + "]");
    }

    cfg.validate();
    return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
    return build_experiment_config(load_ini(path));
}

// Materialize the configured dataset: generated kinds consume the given rng,
// csv kinds read from disk.
inline LabeledDataset realize_dataset(const DatasetConfig& cfg, RngState& rng) {
    if (cfg.kind == "blobs")
        return gen_gaussian_blobs(rng, cfg.classes, cfg.samples_per_class, cfg.dim,
                                  cfg.center_spread, cfg.cluster_std);
    if (cfg.kind == "spirals") return gen_two_spirals(rng, cfg.samples_per_class, cfg.noise_std);
    return load_csv(cfg.path, cfg.label_column);
}

inline std::vector<std::size_t> network_widths(const NetworkConfig& net,
                                               const LabeledDataset& ds) {
    std::vector<std::size_t> widths;
    widths.push_back(ds.dim());
    for (std::size_t h : net.hidden) widths.push_back(h);
    widths.push_back(ds.num_classes);
    return widths;
}

}  // namespace sdplab
