#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "polygen/core.hpp"

namespace polygen {

// Row-major, channel-interleaved intensity grid. Intensities are raw file
// values (0..maxval for PNM input); standardize() maps them to zero-mean,
// unit-variance grayscale before any spectral op.
struct ImageGrid {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 1;
    std::vector<double> values;

    ImageGrid() = default;
    ImageGrid(std::size_t h, std::size_t w, std::size_t c = 1)
        : height(h), width(w), channels(c), values(h * w * c, 0.0) {}

    double& at(std::size_t y, std::size_t x, std::size_t c = 0) {
        return values[(y * width + x) * channels + c];
    }
    double at(std::size_t y, std::size_t x, std::size_t c = 0) const {
        return values[(y * width + x) * channels + c];
    }
};

// Reads PGM/PPM (P2, P3, P5, P6; 8- or 16-bit) or the raw IMG1 float grid
// by sniffing the magic bytes.
ImageGrid load_image(const std::string& path);

// IMG1: "IMG1", u32 LE height/width/channels, float32 LE values.
void save_image_img1(const ImageGrid& img, const std::string& path);

// 8-bit binary PGM (1 channel) or PPM (3 channels); values are clamped to
// [0, 255] and rounded.
void save_image_pnm(const ImageGrid& img, const std::string& path);

// Grayscale (channel mean), then zero mean and unit population variance.
// Constant images come back all-zero instead of dividing by zero.
ImageGrid standardize(const ImageGrid& img);

// |F| of the unnormalized forward 2D DFT, unshifted layout: entry (u, v)
// is the frequency (u, v) with u in [0,H), v in [0,W). Input must be
// single-channel (standardize first).
Matrix fft_magnitude(const ImageGrid& img);

// Frequency radius normalized per axis to Nyquist, so r = 1 on the axis
// Nyquist bins and sqrt(2) in the corners.
double normalized_radius(std::size_t u, std::size_t v, std::size_t height, std::size_t width);

struct RadialProfile {
    std::vector<double> radius;     // bin centers, ascending in [0, 1]
    std::vector<double> magnitude;  // mean |F| per annulus, empty bins 0
};

// Bins |F| by normalized radius over [0, 1]; corner frequencies with r > 1
// fold into the last bin.
RadialProfile radial_profile(const ImageGrid& img, std::size_t bins = 128);

RadialProfile mean_profile(const std::vector<RadialProfile>& profiles);

// Share of squared spectral magnitude at r >= 0.5, DC excluded from the
// normalizer. All-zero images score 0.
double hf_energy(const ImageGrid& img);

}  // namespace polygen
