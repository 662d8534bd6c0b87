#include "bcgan/pipeline.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "bcgan/calibration.hpp"
#include "bcgan/checkpoint.hpp"
#include "bcgan/dataset.hpp"
#include "bcgan/phantom.hpp"
#include "bcgan/plots.hpp"
#include "bcgan/posterior.hpp"
#include "bcgan/rng.hpp"

namespace fs = std::filesystem;

namespace bcgan {

namespace {

std::string join(const std::string& dir, const std::string& leaf) { return dir + "/" + leaf; }

std::string subject_name(int index_1based) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "subj_%03d", index_1based);
    return buf;
}

uint64_t subject_stream_seed(uint64_t seed, const char* purpose, const std::string& subject_id) {
    return hash_combine(seed, hash_str(std::string(purpose) + "/" + subject_id));
}

Manifest load_manifest_or_fail(const std::string& data_dir) {
    const std::string path = join(data_dir, "manifest.json");
    if (!fs::exists(path)) throw PipelineError("no manifest at " + path);
    return load_manifest(path);
}

std::vector<ManifestEntry> split_entries(const Manifest& m, const std::string& split,
                                         const std::string& data_dir) {
    std::vector<ManifestEntry> entries = m.of_split(split);
    if (entries.empty())
        throw PipelineError("manifest in " + data_dir + " has no '" + split + "' subjects");
    return entries;
}

// truth volumes are stored in [0,1]; posterior volumes may be byte-scaled
float truth_scale(const PosteriorVolume& pv) {
    return pv.scale_domain == ScaleDomain::byte ? 255.0f : 1.0f;
}

Volume scaled_copy(const Volume& v, float scale) {
    Volume out = v;
    for (float& x : out.v) x *= scale;
    return out;
}

void collect_voxel_posteriors(const PosteriorVolume& pv, const Volume& truth_raw,
                              std::vector<VoxelPosterior>& posteriors,
                              std::vector<double>& truths) {
    const float scale = truth_scale(pv);
    for (int64_t i = 0; i < pv.mean.size(); ++i) {
        if (!pv.foreground_mask[size_t(i)]) continue;
        posteriors.push_back({double(pv.mean.v[size_t(i)]), double(pv.stddev.v[size_t(i)])});
        truths.push_back(double(truth_raw.v[size_t(i)]) * scale);
    }
}

SubjectMetrics subject_metrics(const std::string& id, const PosteriorVolume& pv,
                               const Volume& truth) {
    if (!pv.mean.same_shape(truth))
        throw PipelineError("posterior for " + id + " does not match the truth volume shape");
    SubjectMetrics sm;
    sm.subject_id = id;
    sm.rmse = rmse(pv.mean, truth, pv.foreground_mask);
    sm.nrmse = nrmse(pv.mean, truth, pv.foreground_mask);
    sm.nstd = nstd(pv.stddev, pv.foreground_mask);
    const int64_t plane = int64_t(truth.nx) * truth.ny;
    for (int z = 0; z < truth.nz; ++z) {
        const uint8_t* mz = pv.foreground_mask.data() + size_t(z) * size_t(plane);
        bool any = false;
        for (int64_t i = 0; i < plane; ++i)
            if (mz[i]) {
                any = true;
                break;
            }
        if (!any) continue;
        sm.nrmse_slices.push_back(nrmse_span(pv.mean.slice(z), truth.slice(z), mz, plane));
        sm.nstd_slices.push_back(nstd_span(pv.stddev.slice(z), mz, plane));
    }
    return sm;
}

void refuse_existing_file(const std::string& path, bool force) {
    if (!fs::exists(path)) return;
    if (!force) throw PipelineError("refusing to overwrite existing " + path + " (pass --force)");
    fs::remove(path);
}

}  // namespace

void prepare_output_dir(const std::string& path, bool force) {
    std::error_code ec;
    if (fs::exists(path)) {
        if (!force)
            throw PipelineError("output directory " + path +
                                " already exists (pass --force to replace it)");
        fs::remove_all(path, ec);
        if (ec) throw PipelineError("cannot clear " + path + ": " + ec.message());
    }
    fs::create_directories(path, ec);
    if (ec) throw PipelineError("cannot create " + path + ": " + ec.message());
}

void run_gen_data(const RunConfig& cfg, const std::string& out_dir, bool force) {
    prepare_output_dir(out_dir, force);
    const int n = cfg.dataset.num_subjects;
    std::vector<std::string> split =
        make_split_assignment(n, cfg.dataset.train_ratio, cfg.seed);
    Manifest manifest;
    manifest.seed = cfg.seed;
    int n_train = 0;
    for (int i = 0; i < n; ++i) {
        const std::string id = subject_name(i + 1);
        VolumePair pair = generate_subject(subject_stream_seed(cfg.seed, "phantom", id),
                                           cfg.phantom);
        pair.subject_id = id;
        manifest.entries.push_back(write_subject(pair, id, split[size_t(i)], out_dir));
        n_train += split[size_t(i)] == "train";
    }
    save_manifest(manifest, join(out_dir, "manifest.json"));
    std::fprintf(stderr, "generated %d subjects (%d train / %d test) in %s\n", n, n_train,
                 n - n_train, out_dir.c_str());
}

TrainResult run_train(const RunConfig& cfg, const TrainOptions& opt) {
    Manifest manifest = load_manifest_or_fail(opt.data_dir);
    std::vector<ManifestEntry> entries = split_entries(manifest, "train", opt.data_dir);
    std::vector<SubjectData> subjects;
    subjects.reserve(entries.size());
    for (const ManifestEntry& e : entries) subjects.push_back(load_subject(opt.data_dir, e));

    if (opt.resume) {
        if (!fs::is_directory(opt.out_dir))
            throw PipelineError("cannot resume: " + opt.out_dir + " is not a directory");
    } else {
        prepare_output_dir(opt.out_dir, opt.force);
    }

    UNetGenerator gen(cfg.generator, cfg.seed);
    PatchDiscriminator disc(cfg.discriminator, cfg.seed);
    TrainIo io{opt.out_dir, opt.resume, opt.quiet};
    TrainResult result = train(subjects, gen, disc, cfg.train, io);
    if (!opt.quiet)
        std::fprintf(stderr, "training done, final checkpoint %s\n",
                     result.final_checkpoint.c_str());
    return result;
}

void run_predict(const RunConfig& cfg, const PredictOptions& opt) {
    const int passes = opt.passes > 0 ? opt.passes : cfg.t_mc;
    if (passes < 2)
        throw ConfigError("config: --passes must be at least 2, got " + std::to_string(passes));
    Manifest manifest = load_manifest_or_fail(opt.data_dir);
    std::vector<ManifestEntry> entries = split_entries(manifest, opt.split, opt.data_dir);
    if (!opt.subject.empty()) {
        std::erase_if(entries,
                      [&](const ManifestEntry& e) { return e.subject_id != opt.subject; });
        if (entries.empty())
            throw PipelineError("subject " + opt.subject + " not found in split '" + opt.split +
                                "'");
    }

    UNetGenerator gen(cfg.generator, cfg.seed);
    std::vector<NamedBufferRef> refs = gen.checkpoint_refs();
    load_checkpoint(opt.checkpoint, refs);
    prepare_output_dir(opt.out_dir, opt.force);

    for (const ManifestEntry& e : entries) {
        SubjectData sd = load_subject(opt.data_dir, e);
        const uint64_t sub_seed = subject_stream_seed(cfg.seed, "predict", e.subject_id);
        PosteriorVolume pv = mc_predict(gen, sd.contrast_a, passes, sub_seed);
        rescale_to_byte(pv);
        save_posterior(pv, opt.out_dir, e.subject_id, sub_seed);
        std::fprintf(stderr, "predicted %s (%d passes, %" PRId64 " clamped voxels)\n",
                     e.subject_id.c_str(), pv.num_passes, pv.clamp_events);
    }
}

void run_calibrate(const RunConfig& cfg, const CalibrateOptions& opt) {
    (void)cfg;
    Manifest manifest = load_manifest_or_fail(opt.data_dir);
    std::vector<ManifestEntry> entries = split_entries(manifest, opt.split, opt.data_dir);
    refuse_existing_file(opt.out_path, opt.force);

    std::vector<VoxelPosterior> posteriors;
    std::vector<double> truths;
    for (const ManifestEntry& e : entries) {
        PosteriorVolume pv = load_posterior(opt.posterior_dir, e.subject_id);
        SubjectData sd = load_subject(opt.data_dir, e);
        if (!pv.mean.same_shape(sd.contrast_b))
            throw PipelineError("posterior for " + e.subject_id +
                                " does not match the truth volume shape");
        collect_voxel_posteriors(pv, sd.contrast_b, posteriors, truths);
    }
    if (posteriors.empty())
        throw PipelineError("calibration set is empty (no foreground voxels)");

    CalibrationMap map = fit_calibration(posteriors, truths);
    if (fs::path(opt.out_path).has_parent_path())
        fs::create_directories(fs::path(opt.out_path).parent_path());
    save_calibration(map, opt.out_path);
    std::fprintf(stderr, "calibration map fit on %zu voxels from %zu subjects -> %s\n",
                 posteriors.size(), entries.size(), opt.out_path.c_str());
}

MetricReport run_evaluate(const RunConfig& cfg, const EvaluateOptions& opt) {
    (void)cfg;
    Manifest manifest = load_manifest_or_fail(opt.data_dir);
    std::vector<ManifestEntry> entries = split_entries(manifest, opt.split, opt.data_dir);

    CalibrationMap map;
    const bool have_map = !opt.map_path.empty();
    if (have_map) map = load_calibration(opt.map_path);

    prepare_output_dir(opt.out_dir, opt.force);

    MetricReport report;
    std::vector<double> abs_errors, stds;  // pooled over subjects
    std::vector<VoxelPosterior> posteriors;
    std::vector<double> truths;
    double identity_sum = 0.0;
    std::vector<double> rmse_ours, rmse_theirs;  // matched pairs for --compare

    for (const ManifestEntry& e : entries) {
        PosteriorVolume pv = load_posterior(opt.posterior_dir, e.subject_id);
        SubjectData sd = load_subject(opt.data_dir, e);
        const float scale = truth_scale(pv);
        Volume truth = scaled_copy(sd.contrast_b, scale);
        report.subjects.push_back(subject_metrics(e.subject_id, pv, truth));
        identity_sum += nrmse(scaled_copy(sd.contrast_a, scale), truth, pv.foreground_mask);
        for (int64_t i = 0; i < truth.size(); ++i) {
            if (!pv.foreground_mask[size_t(i)]) continue;
            abs_errors.push_back(std::abs(double(pv.mean.v[size_t(i)]) - double(truth.v[size_t(i)])));
            stds.push_back(double(pv.stddev.v[size_t(i)]));
        }
        collect_voxel_posteriors(pv, sd.contrast_b, posteriors, truths);

        if (!opt.compare_dir.empty() &&
            fs::exists(join(opt.compare_dir, e.subject_id + "_posterior.json"))) {
            PosteriorVolume other = load_posterior(opt.compare_dir, e.subject_id);
            Volume other_truth = scaled_copy(sd.contrast_b, truth_scale(other));
            rmse_ours.push_back(report.subjects.back().rmse);
            rmse_theirs.push_back(rmse(other.mean, other_truth, other.foreground_mask));
        }
    }

    const double n_subj = double(report.subjects.size());
    for (const SubjectMetrics& sm : report.subjects) {
        report.mean_rmse += sm.rmse / n_subj;
        report.mean_nrmse += sm.nrmse / n_subj;
        report.mean_nstd += sm.nstd / n_subj;
    }
    report.identity_nrmse = identity_sum / n_subj;

    CalibrationCurve before = calibration_curve(posteriors, truths);
    report.calibration_rms_before = before.rms_vs_diagonal;
    save_curve_csv(before.curve, join(opt.out_dir, "calibration_before.csv"));
    std::vector<CurveSeries> cal_series{before.curve};
    if (have_map) {
        CalibrationCurve after = calibration_curve(posteriors, truths, 100, &map);
        report.calibration_rms_after = after.rms_vs_diagonal;
        save_curve_csv(after.curve, join(opt.out_dir, "calibration_after.csv"));
        cal_series.push_back(after.curve);
    } else {
        // no map means identity recalibration, which changes nothing
        report.calibration_rms_after = report.calibration_rms_before;
    }
    CurveSeries diag{"diagonal", before.curve.x_name, before.curve.y_name, before.curve.x,
                     before.curve.x};
    cal_series.push_back(diag);
    save_curve_svg(cal_series, join(opt.out_dir, "calibration.svg"));

    CurveSeries spars = sparsification_curve(abs_errors, stds);
    save_curve_csv(spars, join(opt.out_dir, "sparsification.csv"));
    save_curve_svg({spars}, join(opt.out_dir, "sparsification.svg"));

    if (!opt.compare_dir.empty()) {
        if (rmse_ours.size() < 2)
            throw PipelineError("--compare needs at least two shared subjects, found " +
                                std::to_string(rmse_ours.size()));
        try {
            report.ttest = stats::paired_ttest(rmse_ours, rmse_theirs);
        } catch (const std::invalid_argument& e) {
            throw PipelineError(std::string("paired t-test failed: ") + e.what());
        }
        report.has_ttest = true;
        report.ttest_against = opt.compare_dir;
    }

    report.validate();
    save_metric_report(report, join(opt.out_dir, "metrics.json"));
    std::fprintf(stderr,
                 "evaluated %zu subjects: mean nRMSE %.4f (identity %.4f), calibration rms "
                 "%.4f before / %.4f after -> %s\n",
                 report.subjects.size(), report.mean_nrmse, report.identity_nrmse,
                 report.calibration_rms_before, report.calibration_rms_after,
                 opt.out_dir.c_str());
    return report;
}

}  // namespace bcgan
