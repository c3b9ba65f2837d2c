#pragma once

#include "motis/identify.hpp"
#include "motis/metrics.hpp"
#include "motis/models.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace motis {

/// Malformed input: bad file contents, unknown keys, out-of-range values.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct DetectionFrame {
    long t = 0;
    std::vector<Detection> detections;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string_view::npos) return {};
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        out.push_back(trim(s.substr(start, pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline std::string where(const std::string& source, std::size_t line) {
    return source + ":" + std::to_string(line) + ": ";
}

inline double parse_double(std::string_view s, const std::string& context) {
    double v = 0.0;
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v))
        throw DataError(context + "expected a finite number, got '" + std::string(s) + "'");
    return v;
}

inline long parse_long(std::string_view s, const std::string& context) {
    long v = 0;
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw DataError(context + "expected an integer, got '" + std::string(s) + "'");
    return v;
}

/// Shortest text that parses back to the same double.
inline std::string exact(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

inline std::string fixed6(double v) {
    char buf[64];
    const int n = std::snprintf(buf, sizeof buf, "%.6f", v);
    std::string s(buf, static_cast<std::size_t>(n));
    if (s.front() == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
    return s;
}

/// CSV reader with a mandatory header; maps column names to indices.
class CsvTable {
public:
    CsvTable(std::istream& in, std::string source) : source_(std::move(source)) {
        std::string line;
        while (std::getline(in, line)) {
            ++line_no_;
            if (!trim(line).empty()) break;
        }
        if (trim(line).empty()) {
            header_read_ = false;
            return;
        }
        header_read_ = true;
        const auto cols = split(line, ',');
        for (std::size_t i = 0; i < cols.size(); ++i) {
            std::string name(cols[i]);
            std::transform(name.begin(), name.end(), name.begin(), [](unsigned char ch) { return std::tolower(ch); });
            if (name.empty()) throw DataError(where(source_, line_no_) + "empty column name in header");
            if (!columns_.emplace(name, i).second)
                throw DataError(where(source_, line_no_) + "duplicate column '" + name + "'");
        }
        width_ = cols.size();
        in_ = &in;
    }

    [[nodiscard]] bool has_header() const { return header_read_; }
    [[nodiscard]] std::optional<std::size_t> column(const std::string& name) const {
        auto it = columns_.find(name);
        if (it == columns_.end()) return std::nullopt;
        return it->second;
    }
    std::size_t require(const std::string& name) const {
        auto c = column(name);
        if (!c) throw DataError(where(source_, 1) + "missing required column '" + name + "'");
        return *c;
    }

    /// Next nonblank row, or false at end of input.
    bool next(std::vector<std::string_view>& fields) {
        if (!in_) return false;
        while (std::getline(*in_, row_)) {
            ++line_no_;
            if (trim(row_).empty()) continue;
            fields = split(row_, ',');
            if (fields.size() != width_)
                throw DataError(context() + "expected " + std::to_string(width_) + " fields, found " +
                                std::to_string(fields.size()));
            return true;
        }
        return false;
    }

    [[nodiscard]] std::string context() const { return where(source_, line_no_); }

private:
    std::string source_;
    std::istream* in_ = nullptr;
    std::map<std::string, std::size_t> columns_;
    std::size_t width_ = 0;
    std::size_t line_no_ = 0;
    bool header_read_ = false;
    std::string row_;
};

inline std::ifstream open_input(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "'");
    return in;
}

}  // namespace detail

/// Parses `key = value` lines into parameters, starting from `base`. '#' starts a comment.
inline ModelParams parse_config(std::istream& in, const std::string& source = "config",
                                ModelParams base = ModelParams{}) {
    ModelParams p = base;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto body = detail::trim(line);
        if (body.empty()) continue;
        const auto ctx = detail::where(source, line_no);
        const auto eq = body.find('=');
        if (eq == std::string_view::npos) throw DataError(ctx + "expected 'key = value'");
        const std::string key(detail::trim(body.substr(0, eq)));
        const auto value = detail::trim(body.substr(eq + 1));
        auto number = [&] { return detail::parse_double(value, ctx); };
        auto count = [&] {
            const long v = detail::parse_long(value, ctx);
            if (v <= 0) throw DataError(ctx + key + " must be a positive integer");
            return static_cast<std::size_t>(v);
        };
        auto numbers = [&](std::size_t n) {
            std::vector<double> out;
            std::istringstream ss{std::string(value)};
            std::string tok;
            while (ss >> tok) out.push_back(detail::parse_double(tok, ctx));
            if (out.size() != n) throw DataError(ctx + key + " expects " + std::to_string(n) + " numbers");
            return out;
        };
        if (key == "lambda") p.birth_rate = number();
        else if (key == "mu") p.death_rate = number();
        else if (key == "sigma_p") p.dash_power_sigma = number();
        else if (key == "nu") p.false_rate = number();
        else if (key == "xi") p.miss_rate = number();
        else if (key == "tau") p.dt = number();
        else if (key == "t_assign") p.assign_threshold = number();
        else if (key == "t_fm") p.fm_threshold = number();
        else if (key == "alpha0") p.gamma_alpha0 = number();
        else if (key == "beta0") p.gamma_beta0 = number();
        else if (key == "area_min") p.bbox_area_min = number();
        else if (key == "area_max") p.bbox_area_max = number();
        else if (key == "report_conf") p.report_conf = number();
        else if (key == "n_particles") p.n_particles = count();
        else if (key == "max_em_steps") p.max_em_steps = count();
        else if (key == "kde_background") p.kde_background = number();
        else if (key == "arena") {
            const auto v = numbers(4);
            p.arena = {v[0], v[1], v[2], v[3]};
        } else if (key == "obs_cov") {
            // Either one variance or "sxx sxy syy".
            std::istringstream ss{std::string(value)};
            std::vector<double> v;
            std::string tok;
            while (ss >> tok) v.push_back(detail::parse_double(tok, ctx));
            if (v.size() == 1) p.obs_cov = v[0] * Eigen::Matrix2d::Identity();
            else if (v.size() == 3) p.obs_cov << v[0], v[1], v[1], v[2];
            else throw DataError(ctx + "obs_cov expects 1 or 3 numbers");
        } else {
            throw DataError(ctx + "unknown key '" + key + "'");
        }
    }
    try {
        p.validate();
    } catch (const std::invalid_argument& e) {
        throw DataError(source + ": " + e.what());
    }
    return p;
}

inline ModelParams load_config(const std::string& path, ModelParams base = ModelParams{}) {
    auto in = detail::open_input(path);
    return parse_config(in, path, base);
}

/// Writes every configurable key with its current value.
inline void write_config(std::ostream& out, const ModelParams& p) {
    using detail::exact;
    out << "lambda = " << exact(p.birth_rate) << "\n"
        << "mu = " << exact(p.death_rate) << "\n"
        << "sigma_p = " << exact(p.dash_power_sigma) << "\n"
        << "nu = " << exact(p.false_rate) << "\n"
        << "xi = " << exact(p.miss_rate) << "\n"
        << "tau = " << exact(p.dt) << "\n"
        << "obs_cov = " << exact(p.obs_cov(0, 0)) << " " << exact(p.obs_cov(0, 1)) << " " << exact(p.obs_cov(1, 1))
        << "\n"
        << "t_assign = " << exact(p.assign_threshold) << "\n"
        << "t_fm = " << exact(p.fm_threshold) << "\n"
        << "alpha0 = " << exact(p.gamma_alpha0) << "\n"
        << "beta0 = " << exact(p.gamma_beta0) << "\n"
        << "area_min = " << exact(p.bbox_area_min) << "\n"
        << "area_max = " << exact(p.bbox_area_max) << "\n"
        << "report_conf = " << exact(p.report_conf) << "\n"
        << "n_particles = " << p.n_particles << "\n"
        << "max_em_steps = " << p.max_em_steps << "\n"
        << "kde_background = " << exact(p.kde_background) << "\n"
        << "arena = " << exact(p.arena.x0) << " " << exact(p.arena.y0) << " " << exact(p.arena.x1) << " "
        << exact(p.arena.y1) << "\n";
}

/// Reads `frame,x,y[,confidence][,bbox_area]`. Missing confidence means 0.5; a bounding-box
/// area outside [area_min, area_max] forces confidence 0. Frames come back in ascending order,
/// rows within a frame in file order. Frames without rows are not listed.
inline std::vector<DetectionFrame> ingest(std::istream& in, const ModelParams& params,
                                          const std::string& source = "detections") {
    detail::CsvTable csv(in, source);
    std::map<long, std::vector<Detection>> frames;
    if (!csv.has_header()) return {};
    const auto frame_col = csv.require("frame");
    const auto x_col = csv.require("x");
    const auto y_col = csv.require("y");
    const auto conf_col = csv.column("confidence");
    const auto area_col = csv.column("bbox_area");
    std::vector<std::string_view> f;
    while (csv.next(f)) {
        const auto ctx = csv.context();
        const long t = detail::parse_long(f[frame_col], ctx);
        if (t < 0) throw DataError(ctx + "frame index must be >= 0");
        Detection d{detail::parse_double(f[x_col], ctx), detail::parse_double(f[y_col], ctx), kDefaultConfidence};
        if (conf_col && !f[*conf_col].empty()) {
            d.c = detail::parse_double(f[*conf_col], ctx);
            if (d.c < 0.0 || d.c > 1.0) throw DataError(ctx + "confidence must lie in [0, 1]");
        }
        if (area_col && !f[*area_col].empty()) {
            const double area = detail::parse_double(f[*area_col], ctx);
            if (area < params.bbox_area_min || area > params.bbox_area_max) d.c = 0.0;
        }
        frames[t].push_back(d);
    }
    std::vector<DetectionFrame> out;
    for (auto& [t, dets] : frames) out.push_back({t, std::move(dets)});
    return out;
}

inline std::vector<DetectionFrame> ingest_file(const std::string& path, const ModelParams& params) {
    auto in = detail::open_input(path);
    return ingest(in, params, path);
}

inline void write_detections(std::ostream& out, const std::vector<DetectionFrame>& frames) {
    out << "frame,x,y,confidence\n";
    for (const auto& f : frames)
        for (const auto& d : f.detections)
            out << f.t << ',' << detail::exact(d.x) << ',' << detail::exact(d.y) << ',' << detail::exact(d.c) << '\n';
}

/// Reads `frame,gt_id,x,y`, grouped by frame in ascending order (frames without rows omitted).
inline std::vector<GroundTruthFrame> read_ground_truth(std::istream& in, const std::string& source = "ground truth") {
    detail::CsvTable csv(in, source);
    std::map<long, std::vector<GroundTruthObject>> frames;
    if (csv.has_header()) {
        const auto frame_col = csv.require("frame");
        const auto id_col = csv.require("gt_id");
        const auto x_col = csv.require("x");
        const auto y_col = csv.require("y");
        std::vector<std::string_view> f;
        while (csv.next(f)) {
            const auto ctx = csv.context();
            const long t = detail::parse_long(f[frame_col], ctx);
            if (t < 0) throw DataError(ctx + "frame index must be >= 0");
            auto& objs = frames[t];
            const long id = detail::parse_long(f[id_col], ctx);
            for (const auto& o : objs)
                if (o.id == id) throw DataError(ctx + "duplicate gt_id " + std::to_string(id) + " in frame");
            objs.push_back({id, detail::parse_double(f[x_col], ctx), detail::parse_double(f[y_col], ctx)});
        }
    }
    std::vector<GroundTruthFrame> out;
    for (auto& [t, objs] : frames) out.push_back({t, std::move(objs)});
    return out;
}

inline void write_ground_truth(std::ostream& out, const std::vector<GroundTruthFrame>& frames) {
    out << "frame,gt_id,x,y\n";
    for (const auto& f : frames)
        for (const auto& o : f.objects)
            out << f.t << ',' << o.id << ',' << detail::exact(o.x) << ',' << detail::exact(o.y) << '\n';
}

/// Reads `frame,rho,x,y,vx,vy,confidence`.
inline std::vector<TrackFrame> read_tracks(std::istream& in, const std::string& source = "tracks") {
    detail::CsvTable csv(in, source);
    std::map<long, std::vector<TrackObject>> frames;
    if (csv.has_header()) {
        const auto frame_col = csv.require("frame");
        const auto rho_col = csv.require("rho");
        const auto x_col = csv.require("x");
        const auto y_col = csv.require("y");
        const auto conf_col = csv.column("confidence");
        std::vector<std::string_view> f;
        while (csv.next(f)) {
            const auto ctx = csv.context();
            const long t = detail::parse_long(f[frame_col], ctx);
            if (t < 0) throw DataError(ctx + "frame index must be >= 0");
            auto& tracks = frames[t];
            const long rho = detail::parse_long(f[rho_col], ctx);
            for (const auto& h : tracks)
                if (h.rho == rho) throw DataError(ctx + "duplicate rho " + std::to_string(rho) + " in frame");
            TrackObject h{rho, detail::parse_double(f[x_col], ctx), detail::parse_double(f[y_col], ctx), 1.0};
            if (conf_col) h.c = detail::parse_double(f[*conf_col], ctx);
            tracks.push_back(h);
        }
    }
    std::vector<TrackFrame> out;
    for (auto& [t, tracks] : frames) out.push_back({t, std::move(tracks)});
    return out;
}

inline void write_track_header(std::ostream& out) { out << "frame,rho,x,y,vx,vy,confidence\n"; }

inline void write_track_rows(std::ostream& out, long frame, const std::vector<Identity>& identities) {
    using detail::fixed6;
    for (const auto& id : identities) {
        out << frame << ',' << id.rho << ',' << fixed6(id.s.x) << ',' << fixed6(id.s.y) << ',' << fixed6(id.s.vx) << ','
            << fixed6(id.s.vy) << ',' << fixed6(id.c) << '\n';
    }
}

/// Expands sparse frame lists onto the contiguous range [first, last], inserting empty frames.
template <typename Frame>
std::vector<Frame> dense_frames(const std::vector<Frame>& sparse, long first, long last) {
    std::vector<Frame> out;
    std::size_t k = 0;
    for (long t = first; t <= last; ++t) {
        while (k < sparse.size() && sparse[k].t < t) ++k;
        if (k < sparse.size() && sparse[k].t == t) out.push_back(sparse[k]);
        else {
            Frame f{};
            f.t = t;
            out.push_back(std::move(f));
        }
    }
    return out;
}

}  // namespace motis
