#include "motis/bench.hpp"
#include "motis/io.hpp"
#include "motis/metrics.hpp"
#include "motis/sim.hpp"
#include "motis/tracker.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace {

using namespace motis;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitInternal = 3;

/// Model parameter flags shared by every subcommand; unset flags keep the config value.
struct ParamFlags {
    std::string config;
    std::optional<double> lambda, mu, sigma_p, nu, xi, tau, t_assign, t_fm, alpha0, beta0;
    std::optional<double> area_min, area_max, report_conf, kde_background;
    std::optional<std::size_t> n_particles, max_em_steps;

    void attach(CLI::App* cmd) {
        const ModelParams d;
        auto num = [](double v) {
            std::ostringstream s;
            s << v;
            return s.str();
        };
        cmd->add_option("--config", config, "key = value parameter file");
        cmd->add_option("--lambda", lambda, "birth rate, 1/s (default " + num(d.birth_rate) + ")");
        cmd->add_option("--mu", mu, "death rate per object, 1/s (default " + num(d.death_rate) + ")");
        cmd->add_option("--sigma-p", sigma_p, "dash power std (default " + num(d.dash_power_sigma) + ")");
        cmd->add_option("--nu", nu, "false detection rate, 1/s (default " + num(d.false_rate) + ")");
        cmd->add_option("--xi", xi, "missing detection rate per object, 1/s (default " + num(d.miss_rate) + ")");
        cmd->add_option("--tau", tau, "frame interval, s (default " + num(d.dt) + ")");
        cmd->add_option("--t-assign", t_assign, "assignment pruning threshold (default " + num(d.assign_threshold) + ")");
        cmd->add_option("--t-fm", t_fm, "false-missing pruning threshold (default " + num(d.fm_threshold) + ")");
        cmd->add_option("--alpha0", alpha0, "gamma prior shape (default " + num(d.gamma_alpha0) + ")");
        cmd->add_option("--beta0", beta0, "gamma prior rate (default " + num(d.gamma_beta0) + ")");
        cmd->add_option("--area-min", area_min, "min bounding-box area, m^2 (default " + num(d.bbox_area_min) + ")");
        cmd->add_option("--area-max", area_max, "max bounding-box area, m^2 (default " + num(d.bbox_area_max) + ")");
        cmd->add_option("--report-conf", report_conf, "reporting confidence (default " + num(d.report_conf) + ")");
        cmd->add_option("--kde-background", kde_background,
                        "uniform pseudo-points in the update KDE (default " + num(d.kde_background) + ")");
        cmd->add_option("--n-particles", n_particles, "particle count (default " + num(d.n_particles) + ")");
        cmd->add_option("--max-em-steps", max_em_steps, "EM iteration cap (default " + num(d.max_em_steps) + ")");
    }

    [[nodiscard]] ModelParams resolve(ModelParams base = ModelParams{}) const {
        ModelParams p = config.empty() ? base : load_config(config, base);
        auto set = [](auto& field, const auto& flag) {
            if (flag) field = *flag;
        };
        set(p.birth_rate, lambda);
        set(p.death_rate, mu);
        set(p.dash_power_sigma, sigma_p);
        set(p.false_rate, nu);
        set(p.miss_rate, xi);
        set(p.dt, tau);
        set(p.assign_threshold, t_assign);
        set(p.fm_threshold, t_fm);
        set(p.gamma_alpha0, alpha0);
        set(p.gamma_beta0, beta0);
        set(p.bbox_area_min, area_min);
        set(p.bbox_area_max, area_max);
        set(p.report_conf, report_conf);
        set(p.kde_background, kde_background);
        set(p.n_particles, n_particles);
        set(p.max_em_steps, max_em_steps);
        try {
            p.validate();
        } catch (const std::invalid_argument& e) {
            throw DataError(e.what());
        }
        return p;
    }
};

std::ofstream open_output(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open " + path + " for writing");
    return out;
}

std::vector<GroundTruthFrame> load_ground_truth(const std::string& path) {
    auto in = detail::open_input(path);
    return read_ground_truth(in, path);
}

std::vector<TrackFrame> load_tracks(const std::string& path) {
    auto in = detail::open_input(path);
    return read_tracks(in, path);
}

/// Puts tracks on the ground truth's contiguous frame range. Track rows outside it are an error.
MotReport evaluate(const std::vector<GroundTruthFrame>& gt_sparse, const std::vector<TrackFrame>& tr_sparse,
                   double threshold) {
    if (gt_sparse.empty() && tr_sparse.empty()) return clear_mot({}, {}, threshold);
    long first = 0, last = 0;
    if (!gt_sparse.empty()) {
        first = gt_sparse.front().t;
        last = gt_sparse.back().t;
        for (const auto& f : tr_sparse)
            if (!f.tracks.empty() && (f.t < first || f.t > last))
                throw DataError("track frame " + std::to_string(f.t) + " lies outside the ground-truth frames " +
                                std::to_string(first) + ".." + std::to_string(last));
    } else {
        first = tr_sparse.front().t;
        last = tr_sparse.back().t;
    }
    return clear_mot(dense_frames(gt_sparse, first, last), dense_frames(tr_sparse, first, last), threshold);
}

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;
};

MeanStd mean_std(const std::vector<double>& v) {
    MeanStd r;
    if (v.empty()) return r;
    for (double x : v) r.mean += x;
    r.mean /= static_cast<double>(v.size());
    if (v.size() > 1) {
        for (double x : v) r.std += (x - r.mean) * (x - r.mean);
        r.std = std::sqrt(r.std / static_cast<double>(v.size() - 1));
    }
    return r;
}

std::string pct(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * v);
    return buf;
}

void print_report(std::ostream& out, const MotReport& r) {
    out << "MOTA  " << pct(r.mota) << "\n"
        << "MOTP  " << pct(r.motp) << "\n"
        << "IDS   " << r.ids << "\n"
        << "MT    " << r.mt << "\n"
        << "FM    " << r.fm << "\n";
}

void write_report_rows(std::ostream& out, const MotReport& r) {
    out << "metric,value\n"
        << "mota," << detail::exact(r.mota) << "\n"
        << "motp," << detail::exact(r.motp) << "\n"
        << "ids," << r.ids << "\n"
        << "mt," << r.mt << "\n"
        << "fm," << r.fm << "\n";
}

// ---- track ----

struct TrackArgs {
    ParamFlags params;
    std::string detections;
    std::string out;
    std::string gt;
    std::uint64_t seed = 1;
    std::size_t runs = 1;
    std::optional<long> first_frame, last_frame;
    double threshold = 1.0;
};

void run_tracker(const ModelParams& params, std::uint64_t seed, const std::vector<DetectionFrame>& frames,
                 std::ostream& out, std::vector<TrackFrame>* tracks) {
    Tracker tracker(params, seed);
    write_track_header(out);
    for (const auto& f : frames) {
        const auto ids = tracker.step(f.detections);
        write_track_rows(out, f.t, ids);
        if (tracks) {
            TrackFrame tf{f.t, {}};
            for (const auto& h : ids) tf.tracks.push_back({h.rho, h.s.x, h.s.y, h.c});
            tracks->push_back(std::move(tf));
        }
    }
    if (tracker.degenerate_frames() > 0)
        std::cerr << "warning: seed " << seed << ": all particle weights vanished in " << tracker.degenerate_frames()
                  << " frame(s); weights were reset to uniform\n";
}

int cmd_track(const TrackArgs& a) {
    const ModelParams params = a.params.resolve();
    const auto sparse = ingest_file(a.detections, params);
    std::vector<DetectionFrame> frames;
    if (!sparse.empty() || (a.first_frame && a.last_frame)) {
        const long first = a.first_frame.value_or(sparse.empty() ? 0 : sparse.front().t);
        const long last = a.last_frame.value_or(sparse.empty() ? first - 1 : sparse.back().t);
        frames = dense_frames(sparse, first, last);
    }
    std::vector<GroundTruthFrame> gt;
    if (!a.gt.empty()) gt = load_ground_truth(a.gt);

    std::vector<double> mota, motp, ids, mt, fm;
    for (std::size_t k = 0; k < a.runs; ++k) {
        const std::uint64_t seed = a.seed + k;
        std::vector<TrackFrame> tracks;
        if (k == 0) {
            auto out = open_output(a.out);
            run_tracker(params, seed, frames, out, a.gt.empty() ? nullptr : &tracks);
        } else {
            std::ostringstream discard;
            run_tracker(params, seed, frames, discard, a.gt.empty() ? nullptr : &tracks);
        }
        if (a.gt.empty()) continue;
        const auto r = evaluate(gt, tracks, a.threshold);
        mota.push_back(r.mota);
        motp.push_back(r.motp);
        ids.push_back(static_cast<double>(r.ids));
        mt.push_back(static_cast<double>(r.mt));
        fm.push_back(static_cast<double>(r.fm));
    }
    if (!a.gt.empty()) {
        auto line = [](const char* name, const std::vector<double>& v, bool percent) {
            const auto s = mean_std(v);
            char buf[96];
            if (percent) std::snprintf(buf, sizeof buf, "%-5s %.2f%% +- %.2f%%\n", name, 100 * s.mean, 100 * s.std);
            else std::snprintf(buf, sizeof buf, "%-5s %.2f +- %.2f\n", name, s.mean, s.std);
            std::cout << buf;
        };
        std::cout << "runs  " << a.runs << " (seeds " << a.seed << ".." << a.seed + a.runs - 1 << ")\n";
        line("MOTA", mota, true);
        line("MOTP", motp, true);
        line("IDS", ids, false);
        line("MT", mt, false);
        line("FM", fm, false);
    }
    return kExitOk;
}

// ---- simulate ----

struct SimulateArgs {
    ParamFlags params;
    std::string detections;
    std::string gt;
    std::uint64_t seed = 1;
    std::size_t frames = 200;
    std::size_t initial = 0;
    std::optional<std::size_t> min_objects, max_objects;
    bool stationary = false;
    bool reflect = false;
    double birth_speed = 0.5;
};

int cmd_simulate(const SimulateArgs& a) {
    const ModelParams params = a.params.resolve();
    SimOptions opt;
    opt.initial_objects = a.initial;
    opt.stationary_start = a.stationary;
    opt.reflect = a.reflect;
    opt.birth_speed_sigma = a.birth_speed;
    if (a.min_objects) opt.min_objects = *a.min_objects;
    if (a.max_objects) opt.max_objects = *a.max_objects;
    const auto sc = generate_truth(params, a.frames, a.seed, opt);
    const auto dets = generate_detection_stream(sc, a.seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<DetectionFrame> frames;
    for (std::size_t t = 0; t < dets.size(); ++t) frames.push_back({sc.frames[t].t, dets[t]});
    {
        auto out = open_output(a.detections);
        write_detections(out, frames);
    }
    if (!a.gt.empty()) {
        auto out = open_output(a.gt);
        write_ground_truth(out, ground_truth_of(sc));
    }
    return kExitOk;
}

// ---- evaluate ----

struct EvaluateArgs {
    std::string gt;
    std::string tracks;
    std::string report;
    double threshold = 1.0;
};

int cmd_evaluate(const EvaluateArgs& a) {
    const auto r = evaluate(load_ground_truth(a.gt), load_tracks(a.tracks), a.threshold);
    print_report(std::cout, r);
    if (!a.report.empty()) {
        auto out = open_output(a.report);
        write_report_rows(out, r);
    }
    return kExitOk;
}

// ---- prune-bench ----

struct BenchArgs {
    ParamFlags params;
    std::string out;
    std::uint64_t seed = 1;
    std::size_t runs = 1;
    std::size_t frames = 1000;
};

int cmd_prune_bench(const BenchArgs& a) {
    const ModelParams params = a.params.resolve(bench_params());
    auto settings = assignment_sweep();
    for (const auto& s : false_missing_sweep()) settings.push_back(s);
    settings.push_back({0.0, 0.0});

    std::vector<std::vector<PruneResult>> per_setting(settings.size());
    for (std::size_t k = 0; k < a.runs; ++k) {
        const auto bench = make_bench_scenario(params, a.frames, a.seed + k);
        for (std::size_t i = 0; i < settings.size(); ++i)
            per_setting[i].push_back(run_prune_setting(bench, params, settings[i]));
    }

    std::ofstream file;
    if (!a.out.empty()) {
        file = open_output(a.out);
        file << "equation,t_assign,t_fm,cases,mean_terms_full,mean_terms_pruned,max_terms_full,max_terms_pruned,"
                "pruning_rate,pruning_rate_std,mean_rel_error,mean_rel_error_std,max_rel_error,seconds\n";
    }
    std::cout << "runs " << a.runs << " (seeds " << a.seed << ".." << a.seed + a.runs - 1 << "), " << a.frames
              << " frames each\n";
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-4s %7s %7s %8s %10s %10s %9s %9s %16s %16s %9s\n", "eq", "T'", "T''",
                  "cases", "avg full", "avg prune", "max full", "max prune", "prune rate", "mean rel err",
                  "time s");
    std::cout << buf;
    for (std::size_t i = 0; i < settings.size(); ++i) {
        const auto& runs = per_setting[i];
        double seconds = 0.0;
        for (const auto& r : runs) seconds += r.seconds;
        for (int eq : {2, 1}) {
            std::vector<PruneSummary> parts;
            std::vector<double> rates, errors;
            for (const auto& r : runs) {
                const auto& s = eq == 2 ? r.matched : r.joint;
                parts.push_back(s);
                rates.push_back(s.pruning_rate);
                errors.push_back(s.mean_rel_error);
            }
            const auto s = pool(parts);
            const auto rate = mean_std(rates);
            const auto err = mean_std(errors);
            std::snprintf(buf, sizeof buf,
                          "%-4s %7g %7g %8zu %10.2f %10.2f %9.0f %9.0f %8.2f%%+-%5.2f %8.4f%%+-%6.4f %9.3f\n",
                          eq == 2 ? "eq2" : "eq1", settings[i].t_assign, settings[i].t_fm, s.cases,
                          s.mean_terms_full, s.mean_terms_pruned, s.max_terms_full, s.max_terms_pruned,
                          100 * s.pruning_rate, 100 * rate.std, 100 * s.mean_rel_error, 100 * err.std, seconds);
            std::cout << buf;
            if (file) {
                file << eq << ',' << detail::exact(settings[i].t_assign) << ',' << detail::exact(settings[i].t_fm)
                     << ',' << s.cases << ',' << detail::exact(s.mean_terms_full) << ','
                     << detail::exact(s.mean_terms_pruned) << ',' << detail::exact(s.max_terms_full) << ','
                     << detail::exact(s.max_terms_pruned) << ',' << detail::exact(s.pruning_rate) << ','
                     << detail::exact(rate.std) << ',' << detail::exact(s.mean_rel_error) << ','
                     << detail::exact(err.std)
                     << ',' << detail::exact(s.max_rel_error) << ',' << detail::exact(seconds) << '\n';
            }
        }
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"motis: set-valued particle filter tracker for detection streams"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for every subcommand");

    TrackArgs track;
    auto* t = app.add_subcommand("track", "Track objects in a detection CSV and write per-frame identities");
    track.params.attach(t);
    t->add_option("--detections,-i", track.detections, "detection CSV: frame,x,y[,confidence][,bbox_area]")
        ->required();
    t->add_option("--out,-o", track.out, "track CSV: frame,rho,x,y,vx,vy,confidence")->required();
    t->add_option("--seed", track.seed, "random seed")->capture_default_str();
    t->add_option("--runs", track.runs, "number of runs, seeds seed..seed+runs-1; only the first is written")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    t->add_option("--gt", track.gt, "ground truth CSV; prints CLEAR MOT mean and std over runs");
    t->add_option("--threshold", track.threshold, "match distance threshold, m")->capture_default_str();
    t->add_option("--first-frame", track.first_frame, "first frame to process (default: first detection frame)");
    t->add_option("--last-frame", track.last_frame, "last frame to process (default: last detection frame)");

    SimulateArgs sim;
    auto* s = app.add_subcommand("simulate", "Generate a synthetic scene: detections and ground truth");
    sim.params.attach(s);
    s->add_option("--detections,-o", sim.detections, "detection CSV to write")->required();
    s->add_option("--gt", sim.gt, "ground truth CSV to write");
    s->add_option("--seed", sim.seed, "random seed")->capture_default_str();
    s->add_option("--frames", sim.frames, "number of frames")->capture_default_str();
    s->add_option("--objects", sim.initial, "objects present in the first frame")->capture_default_str();
    s->add_option("--min-objects", sim.min_objects, "deaths below this count are skipped");
    s->add_option("--max-objects", sim.max_objects, "births above this count are skipped");
    s->add_flag("--stationary", sim.stationary, "start from Poisson(lambda/mu) objects");
    s->add_flag("--reflect", sim.reflect, "objects bounce off the arena boundary");
    s->add_option("--birth-speed", sim.birth_speed, "newborn speed std per axis, m/s")->capture_default_str();

    EvaluateArgs eval;
    auto* e = app.add_subcommand("evaluate", "Score tracks against ground truth with CLEAR MOT");
    e->add_option("--gt", eval.gt, "ground truth CSV: frame,gt_id,x,y")->required();
    e->add_option("--tracks", eval.tracks, "track CSV")->required();
    e->add_option("--report", eval.report, "write metric,value rows here");
    e->add_option("--threshold", eval.threshold, "match distance threshold, m")->capture_default_str();

    BenchArgs bench;
    auto* b = app.add_subcommand("prune-bench", "Pruning experiment: term counts and error of both likelihoods");
    bench.params.attach(b);
    b->add_option("--out,-o", bench.out, "CSV of results pooled over runs; std columns are across runs");
    b->add_option("--seed", bench.seed, "random seed")->capture_default_str();
    b->add_option("--runs", bench.runs, "number of scenarios, seeds seed..seed+runs-1")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    b->add_option("--frames", bench.frames, "frames per scenario")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        const int code = app.exit(err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (t->parsed()) return cmd_track(track);
        if (s->parsed()) return cmd_simulate(sim);
        if (e->parsed()) return cmd_evaluate(eval);
        if (b->parsed()) return cmd_prune_bench(bench);
    } catch (const DataError& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kExitData;
    } catch (const std::invalid_argument& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kExitData;
    } catch (const std::exception& err) {
        std::cerr << "internal error: " << err.what() << "\n";
        return kExitInternal;
    }
    return kExitUsage;
}
