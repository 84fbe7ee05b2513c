#include "dect/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "dect/physics.hpp"

namespace dect {

void RoiSpec::validate(std::size_t image_pixels) const {
    if (pixels.empty())
        throw Error(ErrorKind::config, "roi '" + label + "': empty pixel mask");
    std::vector<std::size_t> sorted = pixels;
    std::sort(sorted.begin(), sorted.end());
    if (sorted.back() >= image_pixels)
        throw Error(ErrorKind::mismatch,
                    "roi '" + label + "': pixel " + std::to_string(sorted.back()) +
                        " outside an image of " + std::to_string(image_pixels) + " pixels");
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
        throw Error(ErrorKind::config, "roi '" + label + "': duplicate pixel in mask");
    if (c1_ref < 0.0 || c2_ref < 0.0 || (c1_ref == 0.0 && c2_ref == 0.0))
        throw Error(ErrorKind::config,
                    "roi '" + label + "': reference composition must be nonnegative "
                    "with at least one positive channel");
}

RoiSpec roi_from_ellipse(const Ellipse& e, std::size_t n_x, std::size_t n_y,
                         double pixel_size_cm, const std::string& label) {
    if (n_x == 0 || n_y == 0 || pixel_size_cm <= 0.0)
        throw Error(ErrorKind::config, "roi_from_ellipse: bad raster dims");
    RoiSpec roi;
    roi.label = label;
    roi.c1_ref = e.composition[0];
    roi.c2_ref = e.composition[1];
    const double cx = (static_cast<double>(n_x) - 1.0) / 2.0;
    const double cy = (static_cast<double>(n_y) - 1.0) / 2.0;
    for (std::size_t iy = 0; iy < n_y; ++iy) {
        const double y = (static_cast<double>(iy) - cy) * pixel_size_cm;
        for (std::size_t ix = 0; ix < n_x; ++ix) {
            const double x = (static_cast<double>(ix) - cx) * pixel_size_cm;
            if (e.contains(x, y))
                roi.pixels.push_back(iy * n_x + ix);
        }
    }
    if (roi.pixels.empty())
        throw Error(ErrorKind::config,
                    "roi_from_ellipse: '" + label + "' covers no pixel centers");
    return roi;
}

RmaeCurve rmae(const BasisImage& c, const RoiSpec& roi, const ScanModel& m,
               const std::vector<double>& energies_keV) {
    roi.validate(c.pixels());
    if (energies_keV.empty())
        throw Error(ErrorKind::config, "rmae: no evaluation energies");

    std::vector<std::size_t> mask = roi.pixels;
    std::sort(mask.begin(), mask.end());

    RmaeCurve curve;
    curve.label = roi.label;
    curve.energies_keV = energies_keV;
    curve.value.reserve(energies_keV.size());
    for (double e : energies_keV) {
        const double mu1 = lac_at(m.material1, e);
        const double mu2 = lac_at(m.material2, e);
        const double mu_ref = roi.c1_ref * mu1 + roi.c2_ref * mu2;
        if (!(mu_ref > 0.0))
            throw Error(ErrorKind::numeric,
                        "rmae: reference LAC vanishes at " + std::to_string(e) + " keV");
        double sum = 0.0;
        for (std::size_t p : mask)
            sum += std::abs(c.channel[0][p] * mu1 + c.channel[1][p] * mu2 - mu_ref);
        curve.value.push_back(sum / double(mask.size()) / mu_ref);
    }
    return curve;
}

std::vector<double> lac_image(const BasisImage& c, const ScanModel& m,
                              double energy_keV) {
    const double mu1 = lac_at(m.material1, energy_keV);
    const double mu2 = lac_at(m.material2, energy_keV);
    std::vector<double> img(c.pixels());
    for (std::size_t p = 0; p < img.size(); ++p)
        img[p] = c.channel[0][p] * mu1 + c.channel[1][p] * mu2;
    return img;
}

std::vector<double> profile(const std::vector<double>& plane, std::size_t n_x,
                            std::size_t n_y, ProfileAxis axis, std::size_t index) {
    if (plane.size() != n_x * n_y)
        throw Error(ErrorKind::mismatch, "profile: plane size does not match dims");
    if (axis == ProfileAxis::row) {
        if (index >= n_y)
            throw Error(ErrorKind::config, "profile: row " + std::to_string(index) +
                                               " out of range");
        return std::vector<double>(plane.begin() + index * n_x,
                                   plane.begin() + (index + 1) * n_x);
    }
    if (index >= n_x)
        throw Error(ErrorKind::config,
                    "profile: column " + std::to_string(index) + " out of range");
    std::vector<double> col(n_y);
    for (std::size_t iy = 0; iy < n_y; ++iy)
        col[iy] = plane[iy * n_x + index];
    return col;
}

namespace {

void check_figure(const Figure& f) {
    if (f.name.empty())
        throw Error(ErrorKind::config, "emit_report: figure with empty name");
    if (f.x.empty())
        throw Error(ErrorKind::config, "emit_report: figure '" + f.name + "' has no points");
    if (f.series.empty())
        throw Error(ErrorKind::config, "emit_report: figure '" + f.name + "' has no series");
    for (const Series& s : f.series)
        if (s.y.size() != f.x.size())
            throw Error(ErrorKind::mismatch,
                        "emit_report: series '" + s.label + "' in figure '" + f.name +
                            "' has " + std::to_string(s.y.size()) + " values for " +
                            std::to_string(f.x.size()) + " abscissae");
}

std::string format_value(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// Short label for an axis tick.
std::string format_tick(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

void write_csv(const std::string& path, const Figure& f) {
    std::ofstream out(path);
    if (!out)
        throw Error(ErrorKind::io, "emit_report: cannot open '" + path + "'",
                    IoCode::open_failed);
    out << "# " << f.x_label;
    for (const Series& s : f.series)
        out << "," << s.label;
    out << "\n";
    for (std::size_t i = 0; i < f.x.size(); ++i) {
        out << format_value(f.x[i]);
        for (const Series& s : f.series)
            out << "," << format_value(s.y[i]);
        out << "\n";
    }
    if (!out)
        throw Error(ErrorKind::io, "emit_report: write to '" + path + "' failed",
                    IoCode::write_failed);
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

void write_svg(const std::string& path, const Figure& f) {
    const double width = 640.0, height = 420.0;
    const double ml = 64.0, mr = 24.0, mt = 40.0, mb = 48.0;
    const double pw = width - ml - mr, ph = height - mt - mb;

    double x_min = f.x.front(), x_max = f.x.front();
    for (double v : f.x) {
        x_min = std::min(x_min, v);
        x_max = std::max(x_max, v);
    }
    double y_min = f.series.front().y.front(), y_max = y_min;
    for (const Series& s : f.series)
        for (double v : s.y) {
            y_min = std::min(y_min, v);
            y_max = std::max(y_max, v);
        }
    if (x_max == x_min)
        x_max = x_min + 1.0;
    if (y_max == y_min) {
        y_min -= 0.5;
        y_max += 0.5;
    } else {
        const double pad = 0.05 * (y_max - y_min);
        y_min -= pad;
        y_max += pad;
    }

    auto px = [&](double v) { return ml + (v - x_min) / (x_max - x_min) * pw; };
    auto py = [&](double v) { return mt + ph - (v - y_min) / (y_max - y_min) * ph; };

    std::ofstream out(path);
    if (!out)
        throw Error(ErrorKind::io, "emit_report: cannot open '" + path + "'",
                    IoCode::open_failed);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
        << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << " " << height
        << "\">\n";
    out << "<rect width=\"" << width << "\" height=\"" << height
        << "\" fill=\"white\"/>\n";
    out << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" "
        << "font-family=\"sans-serif\" font-size=\"15\">" << f.name << "</text>\n";

    // Frame and ticks.
    out << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw
        << "\" height=\"" << ph << "\" fill=\"none\" stroke=\"#444\"/>\n";
    const int n_ticks = 5;
    for (int t = 0; t <= n_ticks; ++t) {
        const double fx = x_min + (x_max - x_min) * t / n_ticks;
        const double gx = px(fx);
        out << "<line x1=\"" << gx << "\" y1=\"" << mt + ph << "\" x2=\"" << gx
            << "\" y2=\"" << mt + ph + 5 << "\" stroke=\"#444\"/>\n";
        out << "<text x=\"" << gx << "\" y=\"" << mt + ph + 20
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
            << format_tick(fx) << "</text>\n";
        const double fy = y_min + (y_max - y_min) * t / n_ticks;
        const double gy = py(fy);
        out << "<line x1=\"" << ml - 5 << "\" y1=\"" << gy << "\" x2=\"" << ml
            << "\" y2=\"" << gy << "\" stroke=\"#444\"/>\n";
        out << "<text x=\"" << ml - 8 << "\" y=\"" << gy + 4
            << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
            << format_tick(fy) << "</text>\n";
    }
    out << "<text x=\"" << ml + pw / 2 << "\" y=\"" << height - 10
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">"
        << f.x_label << "</text>\n";
    out << "<text x=\"16\" y=\"" << mt + ph / 2
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
        << "transform=\"rotate(-90 16 " << mt + ph / 2 << ")\">" << f.y_label
        << "</text>\n";

    for (std::size_t si = 0; si < f.series.size(); ++si) {
        const Series& s = f.series[si];
        const char* color = kPalette[si % (sizeof(kPalette) / sizeof(kPalette[0]))];
        out << "<polyline fill=\"none\" stroke=\"" << color
            << "\" stroke-width=\"1.8\" points=\"";
        for (std::size_t i = 0; i < f.x.size(); ++i)
            out << px(f.x[i]) << "," << py(s.y[i]) << " ";
        out << "\"/>\n";
        const double ly = mt + 16.0 + 16.0 * double(si);
        out << "<line x1=\"" << ml + pw - 150 << "\" y1=\"" << ly << "\" x2=\""
            << ml + pw - 125 << "\" y2=\"" << ly << "\" stroke=\"" << color
            << "\" stroke-width=\"1.8\"/>\n";
        out << "<text x=\"" << ml + pw - 120 << "\" y=\"" << ly + 4
            << "\" font-family=\"sans-serif\" font-size=\"11\">" << s.label
            << "</text>\n";
    }
    out << "</svg>\n";
    if (!out)
        throw Error(ErrorKind::io, "emit_report: write to '" + path + "' failed",
                    IoCode::write_failed);
}

}  // namespace

std::vector<std::string> emit_report(const std::vector<Figure>& figures,
                                     const std::string& out_dir) {
    if (figures.empty())
        throw Error(ErrorKind::config, "emit_report: no figures to write");
    for (const Figure& f : figures)
        check_figure(f);

    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec)
        throw Error(ErrorKind::io,
                    "emit_report: cannot create '" + out_dir + "': " + ec.message(),
                    IoCode::open_failed);

    std::vector<std::string> written;
    for (const Figure& f : figures) {
        const std::string csv = (std::filesystem::path(out_dir) / (f.name + ".csv")).string();
        const std::string svg = (std::filesystem::path(out_dir) / (f.name + ".svg")).string();
        write_csv(csv, f);
        write_svg(svg, f);
        written.push_back(csv);
        written.push_back(svg);
    }
    return written;
}

}  // namespace dect
