#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <string>

#include "bcgan/phantom.hpp"
#include "bcgan/posterior.hpp"

using namespace bcgan;
namespace fs = std::filesystem;

namespace {

std::string fresh_dir(const std::string& name) {
    fs::path p = fs::temp_directory_path() / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p.string();
}

GeneratorSpec tiny_spec(DropoutKind kind) {
    GeneratorSpec spec;
    spec.levels = 3;
    spec.base_channels = 4;
    spec.dropout_kind = kind;
    spec.dropout_positions = {2, 3};
    return spec;
}

Volume phantom_volume(uint64_t seed, int nz = 32) {
    PhantomConfig cfg;
    cfg.nz = nz;
    return generate_subject(seed, cfg).contrast_a;
}

double mean_abs_diff(const Volume& a, const Volume& b) {
    double acc = 0.0;
    for (int64_t i = 0; i < a.size(); ++i)
        acc += std::abs(double(a.v[size_t(i)]) - double(b.v[size_t(i)]));
    return acc / double(a.size());
}

}  // namespace

TEST_CASE("posterior over a dropout-free network collapses to the deterministic output") {
    UNetGenerator net(tiny_spec(DropoutKind::none), 5);
    Volume vol = phantom_volume(81, 8);
    PosteriorVolume pv = mc_predict(net, vol, 4, 9);
    CHECK(pv.num_passes == 4);

    // slice-by-slice deterministic forward for comparison
    for (int z = 0; z < vol.nz; ++z) {
        Tensor x({1, 1, 32, 32});
        std::copy(vol.slice(z), vol.slice(z) + 32 * 32, x.data());
        Tensor det = generator_forward(net, x, RunMode::eval_deterministic, 9, 0);
        for (int64_t i = 0; i < 32 * 32; ++i) {
            CHECK(pv.mean.slice(z)[i] == doctest::Approx(det.data()[i]).epsilon(1e-5));
            CHECK(pv.stddev.slice(z)[i] == doctest::Approx(0.0).epsilon(1e-6));
        }
    }
}

TEST_CASE("posterior inference validates its inputs") {
    UNetGenerator net(tiny_spec(DropoutKind::concrete), 5);
    Volume vol = phantom_volume(82, 4);
    CHECK_THROWS_AS(mc_predict(net, vol, 1, 9), std::invalid_argument);

    Volume wrong(16, 16, 4);
    CHECK_THROWS_AS(mc_predict(net, wrong, 4, 9), std::invalid_argument);
}

TEST_CASE("foreground mask marks positive source voxels") {
    UNetGenerator net(tiny_spec(DropoutKind::concrete), 5);
    Volume vol = phantom_volume(83, 4);
    PosteriorVolume pv = mc_predict(net, vol, 2, 9);
    for (int64_t i = 0; i < vol.size(); ++i)
        CHECK(pv.foreground_mask[size_t(i)] == (vol.v[size_t(i)] > 0.0f ? 1 : 0));
}

TEST_CASE("posterior is reproducible and depends on the seed") {
    UNetGenerator net(tiny_spec(DropoutKind::concrete), 5);
    Volume vol = phantom_volume(84, 4);
    PosteriorVolume a = mc_predict(net, vol, 6, 9);
    PosteriorVolume b = mc_predict(net, vol, 6, 9);
    CHECK(std::memcmp(a.mean.v.data(), b.mean.v.data(), a.mean.v.size() * sizeof(float)) == 0);
    CHECK(std::memcmp(a.stddev.v.data(), b.stddev.v.data(),
                      a.stddev.v.size() * sizeof(float)) == 0);

    PosteriorVolume c = mc_predict(net, vol, 6, 10);
    CHECK(a.mean.v != c.mean.v);
}

TEST_CASE("stochastic spread is nonzero and the running mean converges") {
    UNetGenerator net(tiny_spec(DropoutKind::concrete), 5);
    Volume vol = phantom_volume(85, 4);

    PosteriorVolume p8 = mc_predict(net, vol, 8, 9);
    double sd = 0.0;
    for (float s : p8.stddev.v) sd += s;
    CHECK(sd / double(p8.stddev.size()) > 1e-6);

    // running means converge: two independent long runs agree far more
    // tightly than the per-pass spread they estimate
    PosteriorVolume p64 = mc_predict(net, vol, 64, 9);
    PosteriorVolume p256 = mc_predict(net, vol, 256, 1234);
    double mean_spread = 0.0;
    for (float s : p256.stddev.v) mean_spread += s;
    mean_spread /= double(p256.stddev.size());
    CHECK(mean_abs_diff(p64.mean, p256.mean) < 0.5 * mean_spread);
}

TEST_CASE("tail chunks are handled when nz exceeds the slice batch") {
    // 40 slices forces one full 32-slice chunk plus an 8-slice tail
    UNetGenerator net(tiny_spec(DropoutKind::concrete), 5);
    Volume vol = phantom_volume(86, 40);
    PosteriorVolume pv = mc_predict(net, vol, 2, 9);
    CHECK(pv.mean.nz == 40);
    for (float m : pv.mean.v) CHECK(std::isfinite(m));
    double last_slice_sum = 0.0;
    for (int64_t i = 0; i < 32 * 32; ++i) last_slice_sum += pv.mean.slice(39)[i];
    CHECK(last_slice_sum > 0.0);
}

TEST_CASE("byte rescale scales, clamps, counts and refuses a second pass") {
    PosteriorVolume pv;
    pv.mean = Volume(3, 1, 1);
    pv.mean.v = {-0.1f, 0.5f, 1.2f};
    pv.stddev = Volume(3, 1, 1);
    pv.stddev.v = {0.01f, 0.02f, 0.03f};
    pv.foreground_mask = {1, 1, 1};
    pv.num_passes = 2;

    rescale_to_byte(pv);
    CHECK(pv.mean.v[0] == 0.0f);
    CHECK(pv.mean.v[1] == doctest::Approx(127.5f));
    CHECK(pv.mean.v[2] == 255.0f);
    CHECK(pv.stddev.v[1] == doctest::Approx(5.1f));
    CHECK(pv.clamp_events == 2);
    CHECK(pv.scale_domain == ScaleDomain::byte);
    CHECK_THROWS_AS(rescale_to_byte(pv), std::logic_error);
}

TEST_CASE("posterior files round-trip") {
    PosteriorVolume pv;
    pv.mean = Volume(4, 4, 2);
    pv.stddev = Volume(4, 4, 2);
    pv.foreground_mask.assign(32, 0);
    for (int64_t i = 0; i < pv.mean.size(); ++i) {
        pv.mean.v[size_t(i)] = float(i) * 0.25f;
        pv.stddev.v[size_t(i)] = float(i) * 0.01f;
        pv.foreground_mask[size_t(i)] = i % 3 == 0;
    }
    pv.num_passes = 7;
    rescale_to_byte(pv);

    std::string dir = fresh_dir("bcgan_posterior_io");
    save_posterior(pv, dir, "subj_003", 42);
    CHECK(fs::exists(dir + "/subj_003_mean.rvol"));
    CHECK(fs::exists(dir + "/subj_003_std.rvol"));
    CHECK(fs::exists(dir + "/subj_003_mask.rvol"));
    CHECK(fs::exists(dir + "/subj_003_posterior.json"));

    PosteriorVolume back = load_posterior(dir, "subj_003");
    CHECK(back.num_passes == 7);
    CHECK(back.scale_domain == ScaleDomain::byte);
    CHECK(back.clamp_events == pv.clamp_events);
    CHECK(back.foreground_mask == pv.foreground_mask);
    CHECK(std::memcmp(back.mean.v.data(), pv.mean.v.data(), pv.mean.v.size() * sizeof(float)) ==
          0);
    CHECK(std::memcmp(back.stddev.v.data(), pv.stddev.v.data(),
                      pv.stddev.v.size() * sizeof(float)) == 0);
}

TEST_CASE("loading rejects tampered posterior sets") {
    PosteriorVolume pv;
    pv.mean = Volume(4, 4, 2);
    pv.stddev = Volume(4, 4, 2);
    pv.foreground_mask.assign(32, 1);
    pv.num_passes = 3;
    std::string dir = fresh_dir("bcgan_posterior_bad");
    save_posterior(pv, dir, "subj_009", 42);

    // shrink the std volume so the shapes disagree
    write_rvol(Volume(4, 4, 1), dir + "/subj_009_std.rvol");
    CHECK_THROWS_AS(load_posterior(dir, "subj_009"), VolumeIoError);

    CHECK_THROWS_AS(load_posterior(dir, "subj_missing"), VolumeIoError);
}
