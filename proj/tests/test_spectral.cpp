#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "polygen/errors.hpp"
#include "polygen/rng.hpp"
#include "polygen/spectral.hpp"

using namespace polygen;

namespace {

ImageGrid noise_image(std::size_t h, std::size_t w, std::uint64_t seed) {
    ImageGrid img(h, w, 1);
    Rng rng(seed);
    for (auto& v : img.values) v = rng.next_gaussian();
    return img;
}

// Textbook O(N^4) DFT for cross-checking the library transform.
std::vector<std::complex<double>> dft2_slow(const ImageGrid& img) {
    const std::size_t h = img.height, w = img.width;
    std::vector<std::complex<double>> out(h * w);
    for (std::size_t u = 0; u < h; ++u) {
        for (std::size_t v = 0; v < w; ++v) {
            std::complex<double> acc = 0.0;
            for (std::size_t y = 0; y < h; ++y) {
                for (std::size_t x = 0; x < w; ++x) {
                    const double phase =
                        -2.0 * M_PI *
                        (static_cast<double>(u * y) / h + static_cast<double>(v * x) / w);
                    acc += img.at(y, x) * std::complex<double>(std::cos(phase), std::sin(phase));
                }
            }
            out[u * w + v] = acc;
        }
    }
    return out;
}

// Circular separable binomial blur, a strict low-pass filter.
ImageGrid binomial_blur(const ImageGrid& img) {
    const double k[5] = {1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};
    const std::size_t h = img.height, w = img.width;
    ImageGrid tmp(h, w, 1), out(h, w, 1);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int t = -2; t <= 2; ++t) {
                acc += k[t + 2] * img.at(y, (x + w + t) % w);
            }
            tmp.at(y, x) = acc;
        }
    }
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int t = -2; t <= 2; ++t) {
                acc += k[t + 2] * tmp.at((y + h + t) % h, x);
            }
            out.at(y, x) = acc;
        }
    }
    return out;
}

ImageGrid checkerboard(std::size_t h, std::size_t w) {
    ImageGrid img(h, w, 1);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) img.at(y, x) = ((y + x) % 2 == 0) ? 1.0 : -1.0;
    return img;
}

}  // namespace

TEST_CASE("standardize produces exact moments and guards constants") {
    ImageGrid flat(8, 8, 1);
    for (auto& v : flat.values) v = 42.0;
    auto out = standardize(flat);
    for (double v : out.values) CHECK(v == 0.0);

    auto noisy = noise_image(64, 64, 3);
    auto std1 = standardize(noisy);
    double mean = 0.0;
    for (double v : std1.values) mean += v;
    mean /= static_cast<double>(std1.values.size());
    CHECK(std::abs(mean) < 1e-12);
    double var = 0.0;
    for (double v : std1.values) var += (v - mean) * (v - mean);
    var /= static_cast<double>(std1.values.size());
    CHECK(std::abs(var - 1.0) < 1e-9);

    auto std2 = standardize(std1);
    for (std::size_t i = 0; i < std1.values.size(); ++i) {
        CHECK(std::abs(std2.values[i] - std1.values[i]) < 1e-12);
    }
}

TEST_CASE("standardize averages channels to grayscale") {
    ImageGrid rgb(4, 4, 3);
    ImageGrid gray(4, 4, 1);
    Rng rng(9);
    for (std::size_t i = 0; i < 16; ++i) {
        const double base = rng.next_double() * 10;
        rgb.values[3 * i] = base - 1.0;
        rgb.values[3 * i + 1] = base;
        rgb.values[3 * i + 2] = base + 1.0;
        gray.values[i] = base;
    }
    auto a = standardize(rgb);
    auto b = standardize(gray);
    for (std::size_t i = 0; i < 16; ++i) CHECK(a.values[i] == doctest::Approx(b.values[i]));
}

TEST_CASE("fft magnitude agrees with a direct DFT") {
    auto img = noise_image(8, 6, 11);
    auto mag = fft_magnitude(img);
    auto slow = dft2_slow(img);
    for (std::size_t u = 0; u < 8; ++u) {
        for (std::size_t v = 0; v < 6; ++v) {
            CHECK(mag.at(u, v) == doctest::Approx(std::abs(slow[u * 6 + v])).epsilon(1e-9));
        }
    }
}

TEST_CASE("spectral energy satisfies Parseval") {
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        auto img = standardize(noise_image(32, 24, seed));
        auto mag = fft_magnitude(img);
        double spectral = 0.0;
        for (double m : mag.data) spectral += m * m;
        double spatial = 0.0;
        for (double v : img.values) spatial += v * v;
        const double expected = spatial * 32.0 * 24.0;
        CHECK(std::abs(spectral - expected) / expected < 1e-6);
    }
}

TEST_CASE("constant image yields zero profile and zero energy") {
    ImageGrid flat(16, 16, 1);
    for (auto& v : flat.values) v = 7.0;
    auto std_img = standardize(flat);
    auto prof = radial_profile(std_img, 16);
    for (double m : prof.magnitude) CHECK(m == 0.0);
    CHECK(hf_energy(std_img) == 0.0);
}

TEST_CASE("checkerboard concentrates all energy at the corner frequency") {
    auto img = checkerboard(16, 16);
    CHECK(hf_energy(img) > 0.99);
    // All magnitude lands in the fold-in bin.
    auto prof = radial_profile(img, 8);
    for (std::size_t b = 0; b + 1 < prof.magnitude.size(); ++b) {
        CHECK(prof.magnitude[b] == doctest::Approx(0.0));
    }
    CHECK(prof.magnitude.back() > 0.0);
}

TEST_CASE("horizontal Nyquist grating lands in the r=1 bin") {
    const std::size_t h = 16, w = 16;
    ImageGrid img(h, w, 1);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) img.at(y, x) = (x % 2 == 0) ? 1.0 : -1.0;
    auto prof = radial_profile(img, 10);
    // The only nonzero coefficient sits at (0, W/2), radius exactly 1.
    for (std::size_t b = 0; b + 1 < prof.magnitude.size(); ++b) {
        CHECK(prof.magnitude[b] == doctest::Approx(0.0));
    }
    CHECK(prof.magnitude.back() > 0.0);
    CHECK(hf_energy(img) == doctest::Approx(1.0));
}

TEST_CASE("white noise has a flat profile away from the special radii") {
    const std::size_t n_images = 10000, h = 32, w = 32, bins = 16;
    std::vector<RadialProfile> profiles;
    profiles.reserve(n_images);
    for (std::size_t i = 0; i < n_images; ++i) {
        profiles.push_back(radial_profile(noise_image(h, w, 1000 + i), bins));
    }
    auto mean = mean_profile(profiles);
    double lo = 1e300, hi = 0.0;
    for (std::size_t b = 0; b < bins; ++b) {
        if (mean.radius[b] < 0.1 || mean.radius[b] > 0.9) continue;
        lo = std::min(lo, mean.magnitude[b]);
        hi = std::max(hi, mean.magnitude[b]);
    }
    REQUIRE(hi > 0.0);
    CHECK((hi - lo) / hi < 0.05);
}

TEST_CASE("mean profile is the per-bin arithmetic mean") {
    auto img = standardize(noise_image(16, 16, 5));
    auto p = radial_profile(img, 8);
    auto single = mean_profile({p});
    for (std::size_t b = 0; b < 8; ++b) CHECK(single.magnitude[b] == p.magnitude[b]);

    RadialProfile doubled = p;
    for (double& m : doubled.magnitude) m *= 2.0;
    auto avg = mean_profile({p, doubled});
    for (std::size_t b = 0; b < 8; ++b) {
        CHECK(avg.magnitude[b] == doctest::Approx(1.5 * p.magnitude[b]));
    }

    RadialProfile other = radial_profile(img, 4);
    CHECK_THROWS_AS(mean_profile({p, other}), ValidationError);
    CHECK_THROWS_AS(mean_profile({}), ValidationError);
}

TEST_CASE("blur strictly lowers the high-frequency share") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto raw = standardize(noise_image(32, 32, 500 + seed));
        auto blurred = binomial_blur(raw);
        CHECK(hf_energy(blurred) < hf_energy(raw));
    }
}

TEST_CASE("high-frequency share ignores translation") {
    auto img = standardize(noise_image(24, 24, 77));
    ImageGrid shifted(24, 24, 1);
    for (std::size_t y = 0; y < 24; ++y)
        for (std::size_t x = 0; x < 24; ++x) shifted.at(y, x) = img.at((y + 7) % 24, (x + 3) % 24);
    CHECK(hf_energy(shifted) == doctest::Approx(hf_energy(img)).epsilon(1e-12));
}

TEST_CASE("radial profile survives quarter rotation") {
    auto img = standardize(noise_image(20, 20, 13));
    ImageGrid rot(20, 20, 1);
    for (std::size_t y = 0; y < 20; ++y)
        for (std::size_t x = 0; x < 20; ++x) rot.at(x, 19 - y) = img.at(y, x);
    auto a = radial_profile(img, 12);
    auto b = radial_profile(rot, 12);
    for (std::size_t i = 0; i < 12; ++i) {
        CHECK(a.magnitude[i] == doctest::Approx(b.magnitude[i]).epsilon(1e-9));
    }
}

TEST_CASE("image files round-trip and reject corruption") {
    auto img = noise_image(6, 5, 2);
    const std::string path = "/tmp/polygen_spec_roundtrip.img1";
    save_image_img1(img, path);
    auto back = load_image(path);
    REQUIRE(back.height == 6);
    REQUIRE(back.width == 5);
    for (std::size_t i = 0; i < img.values.size(); ++i) {
        CHECK(back.values[i] == doctest::Approx(static_cast<float>(img.values[i])));
    }
    // float32 payloads reload bit-identically.
    const std::string again = "/tmp/polygen_spec_roundtrip2.img1";
    save_image_img1(back, again);
    std::ifstream f1(path, std::ios::binary), f2(again, std::ios::binary);
    std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(s1 == s2);
    std::remove(path.c_str());
    std::remove(again.c_str());
}

TEST_CASE("pnm decoding handles ascii, binary, comments and 16-bit") {
    const std::string p2 = "/tmp/polygen_spec_p2.pgm";
    {
        std::ofstream out(p2);
        out << "P2\n# comment line\n3 2\n255\n0 10 20\n30 40 50\n";
    }
    auto a = load_image(p2);
    CHECK(a.height == 2);
    CHECK(a.width == 3);
    CHECK(a.channels == 1);
    CHECK(a.at(1, 2) == 50.0);

    const std::string p5 = "/tmp/polygen_spec_p5.pgm";
    {
        std::ofstream out(p5, std::ios::binary);
        out << "P5\n2 2\n255\n";
        const unsigned char px[4] = {0, 128, 64, 255};
        out.write(reinterpret_cast<const char*>(px), 4);
    }
    auto b = load_image(p5);
    CHECK(b.at(0, 1) == 128.0);
    CHECK(b.at(1, 1) == 255.0);

    const std::string p5_16 = "/tmp/polygen_spec_p5_16.pgm";
    {
        std::ofstream out(p5_16, std::ios::binary);
        out << "P5\n2 2\n65535\n";
        const unsigned char px[8] = {0x01, 0x00, 0x00, 0xff, 0xff, 0xff, 0x00, 0x00};
        out.write(reinterpret_cast<const char*>(px), 8);
    }
    auto c = load_image(p5_16);
    CHECK(c.at(0, 0) == 256.0);
    CHECK(c.at(0, 1) == 255.0);
    CHECK(c.at(1, 0) == 65535.0);

    const std::string p6 = "/tmp/polygen_spec_p6.ppm";
    {
        std::ofstream out(p6, std::ios::binary);
        out << "P6\n2 2\n255\n";
        for (int i = 0; i < 12; ++i) {
            const unsigned char v = static_cast<unsigned char>(i * 10);
            out.write(reinterpret_cast<const char*>(&v), 1);
        }
    }
    auto d = load_image(p6);
    CHECK(d.channels == 3);
    CHECK(d.at(0, 1, 2) == 50.0);

    const std::string trunc = "/tmp/polygen_spec_trunc.pgm";
    {
        std::ofstream out(trunc, std::ios::binary);
        out << "P5\n4 4\n255\n";
        const unsigned char px[3] = {1, 2, 3};
        out.write(reinterpret_cast<const char*>(px), 3);
    }
    CHECK_THROWS_AS(load_image(trunc), ValidationError);

    const std::string bad = "/tmp/polygen_spec_bad.pgm";
    {
        std::ofstream out(bad);
        out << "Q9 not an image";
    }
    CHECK_THROWS_AS(load_image(bad), ValidationError);
    CHECK_THROWS_AS(load_image("/tmp/polygen_spec_nonexistent.pgm"), IoError);

    for (const auto& f : {p2, p5, p5_16, p6, trunc, bad}) std::remove(f.c_str());
}

TEST_CASE("spectral ops validate their inputs") {
    ImageGrid rgb(4, 4, 3);
    CHECK_THROWS_AS(fft_magnitude(rgb), ValidationError);
    ImageGrid tiny(1, 4, 1);
    tiny.values.assign(4, 0.0);
    CHECK_THROWS_AS(standardize(tiny), ValidationError);
    auto ok = noise_image(4, 4, 1);
    CHECK_THROWS_AS(radial_profile(ok, 1), ValidationError);
    ImageGrid nan_img(4, 4, 1);
    nan_img.values[3] = std::nan("");
    CHECK_THROWS_AS(standardize(nan_img), ValidationError);
}
