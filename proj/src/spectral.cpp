#include "polygen/spectral.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <mutex>

#include "polygen/errors.hpp"

namespace polygen {

namespace {

void check_grid(const ImageGrid& img, bool single_channel) {
    if (img.height < 2 || img.width < 2) {
        throw ValidationError("image must be at least 2x2");
    }
    if (img.channels != 1 && img.channels != 3) {
        throw ValidationError("image must have 1 or 3 channels");
    }
    if (single_channel && img.channels != 1) {
        throw ValidationError("spectral ops need a single channel; standardize first");
    }
    if (img.values.size() != img.height * img.width * img.channels) {
        throw ValidationError("image buffer size does not match its dimensions");
    }
    for (double v : img.values) {
        if (!std::isfinite(v)) throw ValidationError("image has non-finite intensity");
    }
}

// Token reader for the ASCII parts of PNM files; '#' starts a comment that
// runs to end of line.
class PnmTokens {
public:
    explicit PnmTokens(std::istream& in, const std::string& path) : in_(in), path_(path) {}

    std::size_t next_uint() {
        skip();
        std::size_t v = 0;
        bool any = false;
        int c;
        while ((c = in_.peek()) != EOF && std::isdigit(c)) {
            v = v * 10 + static_cast<std::size_t>(in_.get() - '0');
            any = true;
            if (v > 1000000) throw ValidationError(path_ + ": header value out of range");
        }
        if (!any) throw ValidationError(path_ + ": expected integer in header");
        return v;
    }

    void skip() {
        int c;
        while ((c = in_.peek()) != EOF) {
            if (std::isspace(c)) {
                in_.get();
            } else if (c == '#') {
                while ((c = in_.get()) != EOF && c != '\n') {
                }
            } else {
                break;
            }
        }
    }

private:
    std::istream& in_;
    const std::string& path_;
};

// Total sample limit guards allocations against corrupt headers.
constexpr std::size_t kMaxSamples = std::size_t(1) << 26;

ImageGrid load_pnm(std::ifstream& in, const std::string& path, char kind) {
    const bool ascii = kind == '2' || kind == '3';
    const std::size_t channels = (kind == '3' || kind == '6') ? 3 : 1;
    PnmTokens tok(in, path);
    const std::size_t width = tok.next_uint();
    const std::size_t height = tok.next_uint();
    const std::size_t maxval = tok.next_uint();
    if (maxval == 0 || maxval > 65535) {
        throw ValidationError(path + ": maxval must be in [1, 65535]");
    }
    if (height < 2 || width < 2) throw ValidationError(path + ": image must be at least 2x2");
    if (height > 1000000 || width > 1000000 || height * width * channels > kMaxSamples) {
        throw ValidationError(path + ": image too large");
    }
    ImageGrid img(height, width, channels);
    const std::size_t count = height * width * channels;
    if (ascii) {
        for (std::size_t i = 0; i < count; ++i) {
            tok.skip();
            if (in.peek() == EOF) throw ValidationError(path + ": truncated pixel data");
            const std::size_t v = tok.next_uint();
            if (v > maxval) throw ValidationError(path + ": sample exceeds maxval");
            img.values[i] = static_cast<double>(v);
        }
    } else {
        in.get();  // single whitespace byte after maxval
        const std::size_t bytes_per = maxval < 256 ? 1 : 2;
        std::vector<unsigned char> buf(count * bytes_per);
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        if (static_cast<std::size_t>(in.gcount()) != buf.size()) {
            throw ValidationError(path + ": truncated pixel data");
        }
        for (std::size_t i = 0; i < count; ++i) {
            std::size_t v;
            if (bytes_per == 1) {
                v = buf[i];
            } else {
                v = static_cast<std::size_t>(buf[2 * i]) << 8 | buf[2 * i + 1];  // big-endian
            }
            if (v > maxval) throw ValidationError(path + ": sample exceeds maxval");
            img.values[i] = static_cast<double>(v);
        }
    }
    check_grid(img, false);
    return img;
}

std::uint32_t read_u32le_bytes(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
           static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

void write_u32le_bytes(std::ofstream& out, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                                static_cast<unsigned char>(v >> 8 & 0xff),
                                static_cast<unsigned char>(v >> 16 & 0xff),
                                static_cast<unsigned char>(v >> 24 & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

ImageGrid load_img1(std::ifstream& in, const std::string& path) {
    unsigned char header[12];
    in.read(reinterpret_cast<char*>(header), 12);
    if (in.gcount() != 12) throw ValidationError(path + ": truncated header");
    const std::size_t height = read_u32le_bytes(header);
    const std::size_t width = read_u32le_bytes(header + 4);
    const std::size_t channels = read_u32le_bytes(header + 8);
    if (channels != 1 && channels != 3) {
        throw ValidationError(path + ": channels must be 1 or 3");
    }
    if (height < 2 || width < 2) throw ValidationError(path + ": image must be at least 2x2");
    if (height > 1000000 || width > 1000000 || height * width * channels > kMaxSamples) {
        throw ValidationError(path + ": image too large");
    }
    ImageGrid img(height, width, channels);
    const std::size_t count = height * width * channels;
    std::vector<unsigned char> buf(count * 4);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (static_cast<std::size_t>(in.gcount()) != buf.size()) {
        throw ValidationError(path + ": truncated pixel data");
    }
    for (std::size_t i = 0; i < count; ++i) {
        std::uint32_t bits = read_u32le_bytes(buf.data() + 4 * i);
        float f;
        std::memcpy(&f, &bits, 4);
        img.values[i] = static_cast<double>(f);
    }
    check_grid(img, false);
    return img;
}

// FFTW plan creation is not thread-safe; execution on distinct plans is.
std::mutex& plan_mutex() {
    static std::mutex m;
    return m;
}

std::vector<std::complex<double>> fft2(const ImageGrid& img) {
    check_grid(img, true);
    const std::size_t h = img.height, w = img.width;
    std::vector<std::complex<double>> in(h * w), out(h * w);
    for (std::size_t i = 0; i < h * w; ++i) in[i] = img.values[i];
    fftw_plan plan;
    {
        std::lock_guard<std::mutex> lock(plan_mutex());
        plan = fftw_plan_dft_2d(static_cast<int>(h), static_cast<int>(w),
                                reinterpret_cast<fftw_complex*>(in.data()),
                                reinterpret_cast<fftw_complex*>(out.data()), FFTW_FORWARD,
                                FFTW_ESTIMATE);
    }
    fftw_execute(plan);
    {
        std::lock_guard<std::mutex> lock(plan_mutex());
        fftw_destroy_plan(plan);
    }
    return out;
}

}  // namespace

ImageGrid load_image(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open image " + path);
    char magic[4] = {0, 0, 0, 0};
    in.read(magic, 4);
    if (in.gcount() >= 2 && magic[0] == 'P' &&
        (magic[1] == '2' || magic[1] == '3' || magic[1] == '5' || magic[1] == '6')) {
        in.clear();
        in.seekg(2);
        return load_pnm(in, path, magic[1]);
    }
    if (in.gcount() == 4 && std::memcmp(magic, "IMG1", 4) == 0) {
        return load_img1(in, path);
    }
    throw ValidationError(path + ": unknown image format (want PGM/PPM or IMG1)");
}

void save_image_img1(const ImageGrid& img, const std::string& path) {
    check_grid(img, false);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write image " + path);
    out.write("IMG1", 4);
    write_u32le_bytes(out, static_cast<std::uint32_t>(img.height));
    write_u32le_bytes(out, static_cast<std::uint32_t>(img.width));
    write_u32le_bytes(out, static_cast<std::uint32_t>(img.channels));
    for (double v : img.values) {
        const float f = static_cast<float>(v);
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        const unsigned char b[4] = {static_cast<unsigned char>(bits & 0xff),
                                    static_cast<unsigned char>(bits >> 8 & 0xff),
                                    static_cast<unsigned char>(bits >> 16 & 0xff),
                                    static_cast<unsigned char>(bits >> 24 & 0xff)};
        out.write(reinterpret_cast<const char*>(b), 4);
    }
    if (!out) throw IoError("failed writing image " + path);
}

void save_image_pnm(const ImageGrid& img, const std::string& path) {
    check_grid(img, false);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write image " + path);
    out << (img.channels == 1 ? "P5" : "P6") << "\n"
        << img.width << " " << img.height << "\n255\n";
    for (double v : img.values) {
        const double clamped = std::clamp(v, 0.0, 255.0);
        const unsigned char b = static_cast<unsigned char>(std::lround(clamped));
        out.write(reinterpret_cast<const char*>(&b), 1);
    }
    if (!out) throw IoError("failed writing image " + path);
}

ImageGrid standardize(const ImageGrid& img) {
    check_grid(img, false);
    const std::size_t h = img.height, w = img.width, n = h * w;
    ImageGrid gray(h, w, 1);
    for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t c = 0; c < img.channels; ++c) acc += img.values[i * img.channels + c];
        gray.values[i] = acc / static_cast<double>(img.channels);
    }
    double mean = 0.0;
    for (double v : gray.values) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : gray.values) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    const double sd = std::sqrt(var);
    if (sd < 1e-12 * std::max(1.0, std::abs(mean))) {
        std::fill(gray.values.begin(), gray.values.end(), 0.0);
        return gray;
    }
    for (double& v : gray.values) v = (v - mean) / sd;
    return gray;
}

Matrix fft_magnitude(const ImageGrid& img) {
    const auto spec = fft2(img);
    Matrix mag(img.height, img.width);
    for (std::size_t i = 0; i < spec.size(); ++i) mag.data[i] = std::abs(spec[i]);
    return mag;
}

double normalized_radius(std::size_t u, std::size_t v, std::size_t height, std::size_t width) {
    const double fu = u <= height / 2 ? static_cast<double>(u)
                                      : static_cast<double>(u) - static_cast<double>(height);
    const double fv = v <= width / 2 ? static_cast<double>(v)
                                     : static_cast<double>(v) - static_cast<double>(width);
    const double nu = fu / (static_cast<double>(height) / 2.0);
    const double nv = fv / (static_cast<double>(width) / 2.0);
    return std::sqrt(nu * nu + nv * nv);
}

RadialProfile radial_profile(const ImageGrid& img, std::size_t bins) {
    if (bins < 2) throw ValidationError("need at least two radial bins");
    const auto mag = fft_magnitude(img);
    RadialProfile prof;
    prof.radius.resize(bins);
    prof.magnitude.assign(bins, 0.0);
    for (std::size_t i = 0; i < bins; ++i) {
        prof.radius[i] = (static_cast<double>(i) + 0.5) / static_cast<double>(bins);
    }
    std::vector<std::size_t> counts(bins, 0);
    for (std::size_t u = 0; u < img.height; ++u) {
        for (std::size_t v = 0; v < img.width; ++v) {
            const double r = normalized_radius(u, v, img.height, img.width);
            std::size_t b = static_cast<std::size_t>(r * static_cast<double>(bins));
            if (b >= bins) b = bins - 1;  // r >= 1 folds into the last bin
            prof.magnitude[b] += mag.at(u, v);
            ++counts[b];
        }
    }
    for (std::size_t b = 0; b < bins; ++b) {
        if (counts[b] > 0) prof.magnitude[b] /= static_cast<double>(counts[b]);
    }
    return prof;
}

RadialProfile mean_profile(const std::vector<RadialProfile>& profiles) {
    if (profiles.empty()) throw ValidationError("no profiles to average");
    RadialProfile mean = profiles[0];
    for (std::size_t p = 1; p < profiles.size(); ++p) {
        if (profiles[p].radius != mean.radius) {
            throw ValidationError("profiles use different binnings");
        }
        for (std::size_t b = 0; b < mean.magnitude.size(); ++b) {
            mean.magnitude[b] += profiles[p].magnitude[b];
        }
    }
    const double inv = 1.0 / static_cast<double>(profiles.size());
    for (double& m : mean.magnitude) m *= inv;
    return mean;
}

double hf_energy(const ImageGrid& img) {
    const auto spec = fft2(img);
    double total = 0.0, high = 0.0;
    for (std::size_t u = 0; u < img.height; ++u) {
        for (std::size_t v = 0; v < img.width; ++v) {
            if (u == 0 && v == 0) continue;  // DC excluded
            const double e = std::norm(spec[u * img.width + v]);
            total += e;
            if (normalized_radius(u, v, img.height, img.width) >= 0.5) high += e;
        }
    }
    return total == 0.0 ? 0.0 : high / total;
}

}  // namespace polygen
