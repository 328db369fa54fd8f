#include "latticeloc/frame_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "latticeloc/errors.hpp"
#include "latticeloc/key_value.hpp"

namespace fs = std::filesystem;

namespace latticeloc {

namespace {

std::uint16_t to_sample(double v) {
    return static_cast<std::uint16_t>(std::clamp(std::round(v), 0.0, kSensorMax));
}

// next header token of a PNM file, skipping '#' comments
std::string pnm_token(std::istream& in) {
    std::string tok;
    int c;
    while ((c = in.get()) != EOF) {
        if (c == '#') {
            while ((c = in.get()) != EOF && c != '\n') {}
            continue;
        }
        if (std::isspace(c)) {
            if (!tok.empty()) break;
            continue;
        }
        tok.push_back(static_cast<char>(c));
    }
    return tok;
}

std::size_t parse_dim(const std::string& tok, const fs::path& path) {
    try {
        std::size_t used = 0;
        long long v = std::stoll(tok, &used);
        if (used != tok.size() || v <= 0) throw DataError("");
        return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
        throw DataError(path.string() + ": bad PGM header field '" + tok + "'");
    }
}

}  // namespace

void write_pgm(const fs::path& path, const Frame& frame) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << "P5\n" << frame.width << " " << frame.height << "\n65535\n";
    std::vector<char> buf(frame.values.size() * 2);
    for (std::size_t i = 0; i < frame.values.size(); ++i) {
        const std::uint16_t s = to_sample(frame.values[i]);
        buf[2 * i] = static_cast<char>(s >> 8);
        buf[2 * i + 1] = static_cast<char>(s & 0xff);
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw DataError("write failed: " + path.string());
}

Frame read_pgm(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    if (pnm_token(in) != "P5") throw DataError(path.string() + ": not a binary PGM (P5)");
    const std::size_t w = parse_dim(pnm_token(in), path);
    const std::size_t h = parse_dim(pnm_token(in), path);
    const std::size_t maxval = parse_dim(pnm_token(in), path);
    if (maxval > 65535) throw DataError(path.string() + ": PGM maxval above 65535");
    const std::size_t bytes = maxval > 255 ? 2 : 1;

    Frame frame(w, h);
    std::vector<unsigned char> buf(w * h * bytes);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (static_cast<std::size_t>(in.gcount()) != buf.size()) throw DataError(path.string() + ": truncated PGM data");
    for (std::size_t i = 0; i < w * h; ++i) {
        frame.values[i] = bytes == 2 ? static_cast<double>((buf[2 * i] << 8) | buf[2 * i + 1])
                                     : static_cast<double>(buf[i]);
    }
    return frame;
}

void write_csv_frame(const fs::path& path, const Frame& frame) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << std::setprecision(17);
    for (std::size_t r = 0; r < frame.height; ++r) {
        for (std::size_t c = 0; c < frame.width; ++c) out << (c ? "," : "") << frame.at(r, c);
        out << "\n";
    }
}

Frame read_csv_frame(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    std::vector<double> values;
    std::size_t width = 0, height = 0;
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        std::stringstream ls(line);
        std::string cell;
        std::size_t cols = 0;
        while (std::getline(ls, cell, ',')) {
            try {
                std::size_t used = 0;
                const std::string t = trim(cell);
                values.push_back(std::stod(t, &used));
                if (used != t.size()) throw DataError("");
            } catch (const std::exception&) {
                throw DataError(path.string() + ": bad CSV value '" + cell + "'");
            }
            ++cols;
        }
        if (height == 0) width = cols;
        if (cols != width) throw DataError(path.string() + ": ragged CSV rows");
        ++height;
    }
    if (width == 0 || height == 0) throw DataError(path.string() + ": empty CSV frame");
    Frame frame(width, height);
    frame.values = std::move(values);
    return frame;
}

fs::path sidecar_path(const fs::path& frame_path) {
    fs::path p = frame_path;
    p.replace_extension(".meta");
    return p;
}

void write_sidecar(const fs::path& frame_path, const Frame& frame) {
    std::ofstream out(sidecar_path(frame_path));
    if (!out) throw DataError("cannot write sidecar for " + frame_path.string());
    out << std::setprecision(17);
    out << "pixel_scale_nm = " << frame.pixel_scale << "\n";
    out << "exposure_s = " << frame.exposure << "\n";
    out << "sequence_id = " << frame.sequence_id << "\n";
    out << "frame_id = " << frame.frame_id << "\n";
}

Frame load_frame(const fs::path& path) {
    const std::string ext = path.extension().string();
    Frame frame;
    if (ext == ".pgm") {
        frame = read_pgm(path);
    } else if (ext == ".csv") {
        frame = read_csv_frame(path);
    } else {
        throw DataError(path.string() + ": unsupported frame format");
    }
    frame.frame_id = path.stem().string();
    const fs::path meta = sidecar_path(path);
    if (fs::exists(meta)) {
        const KeyValueFile kv = read_key_value(meta);
        frame.pixel_scale = kv.get_double("pixel_scale_nm").value_or(frame.pixel_scale);
        frame.exposure = kv.get_double("exposure_s").value_or(frame.exposure);
        frame.sequence_id = kv.get("sequence_id").value_or("");
        if (const auto id = kv.get("frame_id"); id && !id->empty()) frame.frame_id = *id;
    }
    if (frame.sequence_id.empty()) frame.sequence_id = frame.frame_id;
    frame.validate();
    return frame;
}

std::vector<fs::path> list_frames(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw DataError(dir.string() + " is not a directory");
    std::vector<fs::path> out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string ext = entry.path().extension().string();
        if (ext == ".pgm" || ext == ".csv") out.push_back(entry.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace latticeloc
