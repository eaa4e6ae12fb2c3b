#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "sdplab/errors.hpp"
#include "sdplab/matrix.hpp"
#include "sdplab/rng.hpp"

namespace sdplab {

struct LabeledDataset {
    DenseMatrix inputs;                // samples x feature-dim
    std::vector<std::size_t> labels;   // dense class indices 0..num_classes-1
    std::size_t num_classes = 0;

    std::size_t size() const { return inputs.rows(); }
    std::size_t dim() const { return inputs.cols(); }

    void validate() const {
        if (labels.size() != inputs.rows())
            throw ValueError("dataset: " + std::to_string(labels.size()) + " labels for " +
                             std::to_string(inputs.rows()) + " rows");
        if (num_classes < 2) throw ValueError("dataset: need at least 2 classes");
        std::vector<std::size_t> counts(num_classes, 0);
        for (std::size_t y : labels) {
            if (y >= num_classes)
                throw ValueError("dataset: label " + std::to_string(y) + " out of range");
            counts[y] += 1;
        }
        for (std::size_t c = 0; c < num_classes; ++c)
            if (counts[c] == 0)
                throw ValueError("dataset: class " + std::to_string(c) + " has no samples");
    }

    std::vector<std::size_t> class_counts() const {
        std::vector<std::size_t> counts(num_classes, 0);
        for (std::size_t y : labels) counts[y] += 1;
        return counts;
    }
};

struct LabeledBatch {
    DenseMatrix inputs;
    std::vector<std::size_t> labels;
};

struct SplitSpec {
    double train_fraction = 0.8;
    double dev_fraction = 0.1;
    double test_fraction = 0.1;
    std::uint64_t seed = 0;

    void validate() const {
        for (double f : {train_fraction, dev_fraction, test_fraction})
            if (!(f > 0.0 && f < 1.0))
                throw ValueError("split: fractions must lie in (0,1)");
        if (std::abs(train_fraction + dev_fraction + test_fraction - 1.0) > 1e-9)
            throw ValueError("split: fractions must sum to 1");
    }
};

inline LabeledDataset gen_gaussian_blobs(RngState& rng, std::size_t num_classes,
                                         std::size_t samples_per_class, std::size_t dim,
                                         double center_spread, double cluster_std) {
    if (num_classes < 2) throw ValueError("gen_gaussian_blobs: need at least 2 classes");
    if (dim < 1) throw ValueError("gen_gaussian_blobs: dim must be >= 1");
    if (samples_per_class < 1) throw ValueError("gen_gaussian_blobs: need samples per class");
    if (cluster_std < 0.0) throw ValueError("gen_gaussian_blobs: cluster_std must be >= 0");

    DenseMatrix centers = seeded_normal(rng, num_classes, dim, 0.0, center_spread);
    LabeledDataset ds;
    ds.num_classes = num_classes;
    ds.inputs = DenseMatrix(num_classes * samples_per_class, dim);
    ds.labels.resize(num_classes * samples_per_class);
    std::size_t row = 0;
    for (std::size_t c = 0; c < num_classes; ++c) {
        for (std::size_t s = 0; s < samples_per_class; ++s, ++row) {
            for (std::size_t j = 0; j < dim; ++j)
                ds.inputs(row, j) = centers(c, j) + cluster_std * rng.next_normal();
            ds.labels[row] = c;
        }
    }
    return ds;
}

// Two interleaved Archimedean spirals in the plane. Arm 0 follows
// r(t) = 0.5 + 2t at angle 3*pi*t for t = i/(n-1); arm 1 is its point
// reflection through the origin. Gaussian jitter of noise_std on both
// coordinates.
inline LabeledDataset gen_two_spirals(RngState& rng, std::size_t samples_per_class,
                                      double noise_std) {
    if (samples_per_class < 2) throw ValueError("gen_two_spirals: need at least 2 per class");
    if (noise_std < 0.0) throw ValueError("gen_two_spirals: noise_std must be >= 0");

    LabeledDataset ds;
    ds.num_classes = 2;
    ds.inputs = DenseMatrix(2 * samples_per_class, 2);
    ds.labels.resize(2 * samples_per_class);
    const double denom = static_cast<double>(samples_per_class - 1);
    for (std::size_t i = 0; i < samples_per_class; ++i) {
        const double t = static_cast<double>(i) / denom;
        const double r = 0.5 + 2.0 * t;
        const double a = 3.0 * std::numbers::pi * t;
        const double x = r * std::cos(a);
        const double y = r * std::sin(a);
        ds.inputs(i, 0) = x + noise_std * rng.next_normal();
        ds.inputs(i, 1) = y + noise_std * rng.next_normal();
        ds.labels[i] = 0;
        const std::size_t j = samples_per_class + i;
        ds.inputs(j, 0) = -x + noise_std * rng.next_normal();
        ds.inputs(j, 1) = -y + noise_std * rng.next_normal();
        ds.labels[j] = 1;
    }
    return ds;
}

namespace detail {

inline std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.push_back("");
    return cells;
}

inline double parse_float_cell(const std::string& cell, std::size_t line_no,
                               const std::string& column) {
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    while (first != last && (*first == ' ' || *first == '\t')) ++first;
    while (last != first && (*(last - 1) == ' ' || *(last - 1) == '\t' || *(last - 1) == '\r'))
        --last;
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last)
        throw ParseError("line " + std::to_string(line_no) + ", column '" + column +
                         "': not a number: '" + cell + "'");
    return value;
}

}  // namespace detail

inline LabeledDataset load_csv(const std::string& path, const std::string& label_column) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);

    std::string header;
    if (!std::getline(in, header)) throw ParseError(path + ": empty file");
    while (!header.empty() && (header.back() == '\r' || header.back() == '\n')) header.pop_back();

    std::vector<std::string> columns = detail::split_line(header);
    std::size_t label_idx = columns.size();
    for (std::size_t i = 0; i < columns.size(); ++i)
        if (columns[i] == label_column) label_idx = i;
    if (label_idx == columns.size())
        throw ParseError(path + ": no column named '" + label_column + "'");
    if (columns.size() < 2) throw ParseError(path + ": need at least one feature column");

    std::vector<std::vector<double>> feature_rows;
    std::vector<std::string> raw_labels;
    std::string line;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells = detail::split_line(line);
        if (cells.size() != columns.size())
            throw ParseError(path + ": line " + std::to_string(line_no) + " has " +
                             std::to_string(cells.size()) + " cells, header has " +
                             std::to_string(columns.size()));
        std::vector<double> row;
        row.reserve(columns.size() - 1);
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i == label_idx) {
                raw_labels.push_back(cells[i]);
            } else {
                row.push_back(detail::parse_float_cell(cells[i], line_no, columns[i]));
            }
        }
        feature_rows.push_back(std::move(row));
    }
    if (feature_rows.empty()) throw ParseError(path + ": no data rows");

    LabeledDataset ds;
    ds.inputs = DenseMatrix(feature_rows.size(), columns.size() - 1);
    for (std::size_t i = 0; i < feature_rows.size(); ++i)
        for (std::size_t j = 0; j < feature_rows[i].size(); ++j)
            ds.inputs(i, j) = feature_rows[i][j];

    // Dense label ids in order of first appearance.
    std::vector<std::string> seen;
    ds.labels.reserve(raw_labels.size());
    for (const std::string& raw : raw_labels) {
        std::size_t id = seen.size();
        for (std::size_t k = 0; k < seen.size(); ++k)
            if (seen[k] == raw) { id = k; break; }
        if (id == seen.size()) seen.push_back(raw);
        ds.labels.push_back(id);
    }
    ds.num_classes = seen.size();
    ds.validate();
    return ds;
}

inline void save_csv(const std::string& path, const LabeledDataset& ds,
                     const std::string& label_column = "label") {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    for (std::size_t j = 0; j < ds.dim(); ++j) out << "f" << j << ",";
    out << label_column << "\n";
    char buf[64];
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (std::size_t j = 0; j < ds.dim(); ++j) {
            auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), ds.inputs(i, j),
                                           std::chars_format::general, 17);
            out.write(buf, ptr - buf);
            out << ",";
        }
        out << ds.labels[i] << "\n";
    }
    if (!out) throw IoError("write failed for " + path);
}

inline LabeledDataset subset(const LabeledDataset& ds, const std::vector<std::size_t>& rows) {
    LabeledDataset out;
    out.num_classes = ds.num_classes;
    out.inputs = DenseMatrix(rows.size(), ds.dim());
    out.labels.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < ds.dim(); ++j) out.inputs(i, j) = ds.inputs(rows[i], j);
        out.labels.push_back(ds.labels[rows[i]]);
    }
    return out;
}

struct DatasetSplits {
    LabeledDataset train;
    LabeledDataset dev;
    LabeledDataset test;
};

inline DatasetSplits split(const LabeledDataset& ds, const SplitSpec& spec) {
    spec.validate();
    const std::size_t n = ds.size();
    RngState rng(spec.seed);
    std::vector<std::size_t> order = shuffled_indices(rng, n);

    const auto n_train = static_cast<std::size_t>(spec.train_fraction * static_cast<double>(n));
    const auto n_dev = static_cast<std::size_t>(spec.dev_fraction * static_cast<double>(n));
    if (n_train == 0 || n_dev == 0 || n_train + n_dev >= n)
        throw ValueError("split: a partition would be empty for " + std::to_string(n) +
                         " samples");

    DatasetSplits out;
    out.train = subset(ds, {order.begin(), order.begin() + n_train});
    out.dev = subset(ds, {order.begin() + n_train, order.begin() + n_train + n_dev});
    out.test = subset(ds, {order.begin() + n_train + n_dev, order.end()});
    return out;
}

// One shuffled epoch of minibatches. A trailing batch smaller than 2 is
// dropped: batch standardization is undefined for one sample.
inline std::vector<LabeledBatch> minibatches(const LabeledDataset& ds, std::size_t batch_size,
                                             RngState& rng) {
    if (batch_size < 2) throw ValueError("minibatches: batch_size must be >= 2");
    std::vector<std::size_t> order = shuffled_indices(rng, ds.size());
    std::vector<LabeledBatch> batches;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        const std::size_t end = std::min(start + batch_size, order.size());
        if (end - start < 2) break;
        LabeledBatch batch;
        batch.inputs = DenseMatrix(end - start, ds.dim());
        batch.labels.reserve(end - start);
        for (std::size_t i = start; i < end; ++i) {
            for (std::size_t j = 0; j < ds.dim(); ++j)
                batch.inputs(i - start, j) = ds.inputs(order[i], j);
            batch.labels.push_back(ds.labels[order[i]]);
        }
        batches.push_back(std::move(batch));
    }
    return batches;
}

inline DenseMatrix one_hot(const std::vector<std::size_t>& labels, std::size_t num_classes) {
    DenseMatrix out(labels.size(), num_classes);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= num_classes)
            throw ValueError("one_hot: label " + std::to_string(labels[i]) + " out of range");
        out(i, labels[i]) = 1.0;
    }
    return out;
}

}  // namespace sdplab
