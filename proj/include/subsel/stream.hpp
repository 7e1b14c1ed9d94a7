#pragma once

#include <subsel/errors.hpp>
#include <subsel/linalg.hpp>
#include <subsel/random.hpp>

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <queue>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace subsel {

// ---------------------------------------------------------------------------
// File formats
//
// CSV:    comma-separated decimal floats, one point per line. Lines starting
//         with '#' are headers/comments and are skipped.
// Binary: "SSEL1\0", n and d as little-endian uint64, then n*d little-endian
//         IEEE-754 doubles in row-major order.

enum class FileFormat { csv, binary };

inline constexpr std::array<char, 6> kBinaryMagic = {'S', 'S', 'E', 'L', '1', '\0'};

namespace detail {

inline std::uint64_t to_little(std::uint64_t v) {
    if constexpr (std::endian::native == std::endian::big) {
        std::uint64_t out = 0;
        for (int i = 0; i < 8; ++i) out |= ((v >> (8 * i)) & 0xFF) << (8 * (7 - i));
        return out;
    }
    return v;
}

inline std::uint64_t read_u64(std::istream& in) {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    return to_little(v);
}

inline void write_u64(std::ostream& out, std::uint64_t v) {
    v = to_little(v);
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline double read_f64(std::istream& in) {
    std::uint64_t bits = read_u64(in);
    return std::bit_cast<double>(bits);
}

inline void write_f64(std::ostream& out, double v) { write_u64(out, std::bit_cast<std::uint64_t>(v)); }

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

// Parses one CSV data line into `row`. Returns false for lines that carry no
// data (blank or '#').
inline bool parse_csv_line(std::string_view line, std::size_t line_no, std::vector<double>& row) {
    line = trim(line);
    if (line.empty() || line.front() == '#') return false;
    row.clear();
    while (true) {
        const std::size_t comma = line.find(',');
        std::string_view field = trim(line.substr(0, comma));
        if (!field.empty() && field.front() == '+') field.remove_prefix(1);
        double value = 0.0;
        auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
        if (field.empty() || ec != std::errc() || ptr != field.data() + field.size())
            throw FormatError("malformed number '" + std::string(field) + "'", line_no);
        if (!std::isfinite(value)) throw FormatError("non-finite entry", line_no);
        row.push_back(value);
        if (comma == std::string_view::npos) break;
        line.remove_prefix(comma + 1);
    }
    return true;
}

inline std::string format_double(double v) {
    std::array<char, 64> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), ptr);
}

} // namespace detail

inline FileFormat detect_format(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    std::array<char, 6> head{};
    in.read(head.data(), head.size());
    if (in.gcount() == static_cast<std::streamsize>(head.size()) && head == kBinaryMagic) return FileFormat::binary;
    if (in.gcount() >= 4 && std::equal(head.begin(), head.begin() + 4, kBinaryMagic.begin()))
        throw FormatError("binary magic mismatch in " + path.string());
    return FileFormat::csv;
}

struct FileShape {
    FileFormat format = FileFormat::csv;
    std::size_t rows = 0;
    std::size_t dim = 0;
};

// Streams every row of a dataset file, in order, to visit(index, row).
// Validates the whole file; returns its shape.
template <class Visitor>
FileShape scan_file(const std::filesystem::path& path, Visitor&& visit) {
    FileShape shape;
    shape.format = detect_format(path);
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());

    if (shape.format == FileFormat::binary) {
        in.seekg(static_cast<std::streamoff>(kBinaryMagic.size()));
        const std::uint64_t n = detail::read_u64(in);
        const std::uint64_t d = detail::read_u64(in);
        if (!in) throw FormatError("truncated binary header");
        if (n == 0 || d == 0) throw FormatError("binary file declares an empty dataset");
        const auto header = static_cast<std::uintmax_t>(kBinaryMagic.size() + 16);
        if (std::filesystem::file_size(path) != header + n * d * sizeof(double))
            throw FormatError("binary payload size does not match n*d");
        shape.rows = n;
        shape.dim = d;
        std::vector<double> row(d);
        for (std::size_t i = 0; i < n; ++i) {
            for (auto& v : row) v = detail::read_f64(in);
            if (!in) throw FormatError("truncated binary payload");
            for (double v : row)
                if (!std::isfinite(v)) throw FormatError("non-finite entry in row " + std::to_string(i));
            visit(i, std::span<const double>(row));
        }
        return shape;
    }

    std::string line;
    std::vector<double> row;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!detail::parse_csv_line(line, line_no, row)) continue;
        if (shape.rows == 0) shape.dim = row.size();
        else if (row.size() != shape.dim)
            throw FormatError("inconsistent row width: expected " + std::to_string(shape.dim) + ", got " +
                                  std::to_string(row.size()),
                              line_no);
        visit(shape.rows, std::span<const double>(row));
        ++shape.rows;
    }
    if (shape.rows == 0) throw FormatError("no data rows in " + path.string());
    return shape;
}

inline PointSet read_points(const std::filesystem::path& path) {
    Matrix m;
    scan_file(path, [&](std::size_t, std::span<const double> row) { m.append_row(row); });
    return PointSet(std::move(m));
}

inline void write_csv(const std::filesystem::path& path, const PointSet& points) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write " + path.string());
    for (std::size_t i = 0; i < points.size(); ++i) {
        auto row = points[i];
        for (std::size_t j = 0; j < row.size(); ++j) {
            if (j) out << ',';
            out << detail::format_double(row[j]);
        }
        out << '\n';
    }
}

inline void write_binary(const std::filesystem::path& path, const PointSet& points) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write " + path.string());
    out.write(kBinaryMagic.data(), kBinaryMagic.size());
    detail::write_u64(out, points.size());
    detail::write_u64(out, points.dim());
    for (double v : points.matrix().data()) detail::write_f64(out, v);
}

inline void write_points(const std::filesystem::path& path, const PointSet& points, FileFormat format) {
    if (format == FileFormat::binary) write_binary(path, points);
    else write_csv(path, points);
}

// ---------------------------------------------------------------------------
// Pass accounting

struct PassEntry {
    std::string label;
    std::size_t rows_visited = 0;
    bool complete = false;

    friend bool operator==(const PassEntry&, const PassEntry&) = default;
};

/// Ordered record of sequential passes over a source.
class PassLog {
public:
    const std::vector<PassEntry>& entries() const { return entries_; }
    std::size_t total_passes() const { return entries_.size(); }
    std::size_t completed_passes() const {
        return static_cast<std::size_t>(std::count_if(entries_.begin(), entries_.end(),
                                                      [](const PassEntry& e) { return e.complete; }));
    }
    bool all_complete() const { return completed_passes() == total_passes(); }

    void record(PassEntry e) { entries_.push_back(std::move(e)); }
    void append(const PassLog& other) {
        entries_.insert(entries_.end(), other.entries_.begin(), other.entries_.end());
    }

    // Entries recorded after the first `mark` ones.
    PassLog since(std::size_t mark) const {
        PassLog out;
        for (std::size_t i = mark; i < entries_.size(); ++i) out.entries_.push_back(entries_[i]);
        return out;
    }

    friend bool operator==(const PassLog&, const PassLog&) = default;

private:
    std::vector<PassEntry> entries_;
};

// True iff exactly `expected` passes were made and each one finished.
inline bool passes_ok(const PassLog& log, std::size_t expected) {
    return log.all_complete() && log.total_passes() == expected;
}

// ---------------------------------------------------------------------------
// Dataset sources

enum class AccessMode { in_memory, streaming };

/// A dataset that can only be read by whole sequential passes, each of which
/// is logged. In streaming mode random row access is unavailable and file
/// rows are re-read from disk on every pass.
class DatasetSource {
public:
    static DatasetSource from_points(std::shared_ptr<const PointSet> points,
                                     AccessMode mode = AccessMode::in_memory) {
        if (!points || points->size() == 0) throw std::invalid_argument("DatasetSource: empty point set");
        DatasetSource s;
        s.points_ = std::move(points);
        s.rows_ = s.points_->size();
        s.dim_ = s.points_->dim();
        s.mode_ = mode;
        return s;
    }

    static DatasetSource from_points(PointSet points, AccessMode mode = AccessMode::in_memory) {
        return from_points(std::make_shared<const PointSet>(std::move(points)), mode);
    }

    // In-memory mode loads the file; streaming mode validates it once and
    // re-reads it on each pass.
    static DatasetSource open(const std::filesystem::path& path, AccessMode mode) {
        if (mode == AccessMode::in_memory) return from_points(read_points(path), mode);
        DatasetSource s;
        const FileShape shape = scan_file(path, [](std::size_t, std::span<const double>) {});
        s.path_ = path;
        s.rows_ = shape.rows;
        s.dim_ = shape.dim;
        s.mode_ = mode;
        return s;
    }

    std::size_t size() const { return rows_; }
    std::size_t dim() const { return dim_; }
    AccessMode mode() const { return mode_; }
    const PassLog& log() const { return log_; }

    // Random access to the rows; only in in-memory mode.
    const PointSet& points() const {
        if (mode_ != AccessMode::in_memory) throw std::logic_error("random row access in streaming mode");
        return *points_;
    }

    // One full sequential visit of rows 0..n-1. If the visitor throws, the
    // pass is logged as incomplete and the exception propagates.
    template <class Visitor>
    const PassEntry& pass(std::string label, Visitor&& visit) {
        PassEntry entry{std::move(label), 0, false};
        try {
            if (points_) {
                for (std::size_t i = 0; i < rows_; ++i) {
                    visit(i, (*points_)[i]);
                    ++entry.rows_visited;
                }
            } else {
                const FileShape shape = scan_file(path_, [&](std::size_t i, std::span<const double> row) {
                    if (i >= rows_ || row.size() != dim_) throw FormatError("dataset changed during a pass");
                    visit(i, row);
                    ++entry.rows_visited;
                });
                if (shape.rows != rows_) throw FormatError("dataset changed during a pass");
            }
        } catch (...) {
            log_.record(std::move(entry));
            throw;
        }
        entry.complete = true;
        log_.record(std::move(entry));
        return log_.entries().back();
    }

private:
    DatasetSource() = default;

    std::shared_ptr<const PointSet> points_;
    std::filesystem::path path_;
    std::size_t rows_ = 0;
    std::size_t dim_ = 0;
    AccessMode mode_ = AccessMode::in_memory;
    PassLog log_;
};

// ---------------------------------------------------------------------------
// Weighted reservoir sampling with replacement

struct ReservoirDraw {
    std::vector<double> point;
    std::size_t source_id = 0;
    double key = 0.0;

    friend bool operator==(const ReservoirDraw&, const ReservoirDraw&) = default;
};

/// A bank of independent single-item weighted reservoirs filled in one pass.
///
/// Each slot keeps the row with the smallest exponential key E_i / w_i, which
/// selects row i with probability w_i / sum(w). Instead of drawing a key for
/// every (row, slot) pair, a slot holding key K skips ahead by an Exp(1)/K
/// jump in cumulative weight; the row where the jump lands replaces it with a
/// key drawn from Exp(w) truncated to (0, K). Slots wait in a min-heap keyed
/// by their jump target, so a pass costs O(n + replacements * log slots).
///
/// Coordinates of rows currently held by some slot are stored once per
/// distinct row, so later evaluations need no access to the source.
class ReservoirBank {
public:
    ReservoirBank(std::size_t slots, std::uint64_t seed) : rng_(seed), key_(slots), id_(slots) {
        if (slots == 0) throw std::invalid_argument("ReservoirBank: need at least one slot");
        std::vector<Pending> init(slots);
        for (std::size_t s = 0; s < slots; ++s) init[s] = {0.0, s};
        pending_ = Heap(std::greater<>{}, std::move(init));
        std::fill(key_.begin(), key_.end(), std::numeric_limits<double>::infinity());
    }

    void offer(std::size_t id, std::span<const double> row, double weight) {
        if (!(weight >= 0.0) || !std::isfinite(weight))
            throw std::invalid_argument("ReservoirBank: weights must be finite and nonnegative");
        if (weight == 0.0) return;
        const double before = total_;
        const double after = before + weight;
        total_ = after;
        if (after == before) return;
        while (!pending_.empty() && pending_.top().first < after) {
            const std::size_t s = pending_.top().second;
            pending_.pop();
            const double k = key_[s];
            const double u = rng_.uniform();
            const double fresh = std::isinf(k) ? -std::log(u) / weight
                                               : -std::log1p(-u * -std::expm1(-weight * k)) / weight;
            if (!std::isinf(k)) release(id_[s]);
            key_[s] = fresh;
            id_[s] = id;
            hold(id, row);
            pending_.emplace(after + rng_.exponential() / fresh, s);
        }
    }

    std::size_t slots() const { return key_.size(); }
    bool degenerate() const { return total_ == 0.0; }
    double total_weight() const { return total_; }

    std::size_t slot_id(std::size_t s) const {
        if (degenerate()) throw DegenerateWeightsError();
        return id_[s];
    }
    double slot_key(std::size_t s) const { return key_[s]; }

    std::span<const double> row(std::size_t id) const { return rows_.at(id).coords; }

    // Distinct rows currently held, ascending by id.
    std::vector<std::size_t> held_ids() const {
        std::vector<std::size_t> out;
        out.reserve(rows_.size());
        for (const auto& [id, r] : rows_) out.push_back(id);
        return out;
    }

    std::vector<ReservoirDraw> draws() const {
        if (degenerate()) throw DegenerateWeightsError();
        std::vector<ReservoirDraw> out;
        out.reserve(slots());
        for (std::size_t s = 0; s < slots(); ++s) {
            auto r = row(id_[s]);
            out.push_back({std::vector<double>(r.begin(), r.end()), id_[s], key_[s]});
        }
        return out;
    }

private:
    struct StoredRow {
        std::vector<double> coords;
        std::size_t refs = 0;
    };
    using Pending = std::pair<double, std::size_t>;
    using Heap = std::priority_queue<Pending, std::vector<Pending>, std::greater<>>;

    void hold(std::size_t id, std::span<const double> row) {
        auto [it, inserted] = rows_.try_emplace(id);
        if (inserted) it->second.coords.assign(row.begin(), row.end());
        ++it->second.refs;
    }

    void release(std::size_t id) {
        auto it = rows_.find(id);
        if (--it->second.refs == 0) rows_.erase(it);
    }

    Rng rng_;
    std::vector<double> key_;
    std::vector<std::size_t> id_;
    Heap pending_;
    std::map<std::size_t, StoredRow> rows_;
    double total_ = 0.0;
};

/// `slots` i.i.d. draws with probability proportional to weight_fn(row), in
/// exactly one pass over the source.
template <class WeightFn>
std::vector<ReservoirDraw> weighted_reservoir_sample(DatasetSource& source, WeightFn&& weight_fn, std::size_t slots,
                                                     std::uint64_t seed, std::string label = "reservoir") {
    ReservoirBank bank(slots, seed);
    source.pass(std::move(label), [&](std::size_t i, std::span<const double> row) {
        bank.offer(i, row, weight_fn(row));
    });
    return bank.draws();
}

} // namespace subsel
