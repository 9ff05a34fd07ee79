#include <phaco/io.hpp>

#include <phaco/error.hpp>

#include <json.hpp>

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace phaco::io {

namespace {

using nlohmann::json;

// PGM token reader: whitespace-separated, '#' starts a comment to EOL.
std::string next_pgm_token(std::istream& in) {
    std::string tok;
    int ch;
    while ((ch = in.get()) != EOF) {
        if (ch == '#') {
            while ((ch = in.get()) != EOF && ch != '\n') {
            }
            continue;
        }
        if (std::isspace(ch)) {
            if (!tok.empty()) return tok;
            continue;
        }
        tok.push_back(static_cast<char>(ch));
    }
    return tok;
}

struct PgmImage {
    int width, height;
    std::vector<std::uint8_t> bytes;
};

PgmImage read_pgm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorCode::IoFailure, "cannot read: " + path);
    if (next_pgm_token(f) != "P5")
        throw Error(ErrorCode::InvalidFormat, "not a binary PGM: " + path);
    PgmImage img;
    try {
        img.width = std::stoi(next_pgm_token(f));
        img.height = std::stoi(next_pgm_token(f));
        const int maxval = std::stoi(next_pgm_token(f));
        if (maxval != 255)
            throw Error(ErrorCode::InvalidFormat, "unsupported PGM maxval in " + path);
    } catch (const Error&) {
        throw;
    } catch (...) {
        throw Error(ErrorCode::InvalidFormat, "malformed PGM header: " + path);
    }
    if (img.width < 1 || img.height < 1)
        throw Error(ErrorCode::InvalidFormat, "bad PGM dimensions: " + path);
    img.bytes.resize(static_cast<size_t>(img.width) * img.height);
    f.read(reinterpret_cast<char*>(img.bytes.data()),
           static_cast<std::streamsize>(img.bytes.size()));
    if (f.gcount() != static_cast<std::streamsize>(img.bytes.size()))
        throw Error(ErrorCode::InvalidFormat, "truncated PGM payload: " + path);
    return img;
}

void write_pgm(const std::string& path, int width, int height,
               const std::vector<std::uint8_t>& bytes) {
    std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
    out.append(reinterpret_cast<const char*>(bytes.data()), bytes.size());
    atomic_write(path, out);
}

template <typename T>
void append_pod(std::string& out, T v) {
    out.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

Mat read_features_csv(const std::string& path, const std::string& text) {
    Mat rows;
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
        if (line.empty() || line == "\r") continue;
        std::vector<double> vals;
        std::istringstream cells(line);
        std::string cell;
        while (std::getline(cells, cell, ',')) {
            char* end = nullptr;
            const double v = std::strtod(cell.c_str(), &end);
            if (end == cell.c_str())
                throw Error(ErrorCode::InvalidFormat, "bad feature value in " + path);
            vals.push_back(v);
        }
        if (rows.rows == 0) {
            rows.cols = static_cast<int>(vals.size());
        } else if (static_cast<int>(vals.size()) != rows.cols) {
            throw Error(ErrorCode::InvalidFormat, "ragged feature rows in " + path);
        }
        rows.a.insert(rows.a.end(), vals.begin(), vals.end());
        ++rows.rows;
    }
    if (rows.rows == 0) throw Error(ErrorCode::InvalidFormat, "no feature rows in " + path);
    return rows;
}

} // namespace

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorCode::IoFailure, "cannot read: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void atomic_write(const std::string& path, const std::string& bytes) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw Error(ErrorCode::IoFailure, "cannot write: " + tmp);
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        f.flush();
        if (!f) throw Error(ErrorCode::IoFailure, "short write: " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw Error(ErrorCode::IoFailure, "cannot move into place: " + path);
    }
}

void write_mask_pgm(const std::string& path, const BinaryMask& m) {
    std::vector<std::uint8_t> bytes(static_cast<size_t>(m.width) * m.height);
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x)
            bytes[static_cast<size_t>(y) * m.width + x] = m.at(x, y) ? 255 : 0;
    write_pgm(path, m.width, m.height, bytes);
}

BinaryMask read_mask_pgm(const std::string& path) {
    const PgmImage img = read_pgm(path);
    BinaryMask m(img.width, img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            if (img.bytes[static_cast<size_t>(y) * img.width + x] > 127) m.at(x, y) = 1;
    return m;
}

void write_gray_pgm(const std::string& path, const GrayFrame& f) {
    std::vector<std::uint8_t> bytes(static_cast<size_t>(f.width) * f.height);
    for (int y = 0; y < f.height; ++y)
        for (int x = 0; x < f.width; ++x) {
            const double v = std::clamp(static_cast<double>(f.at(x, y)), 0.0, 1.0);
            bytes[static_cast<size_t>(y) * f.width + x] =
                static_cast<std::uint8_t>(std::lround(v * 255.0));
        }
    write_pgm(path, f.width, f.height, bytes);
}

GrayFrame read_gray_pgm(const std::string& path) {
    const PgmImage img = read_pgm(path);
    GrayFrame f(img.width, img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            f.at(x, y) =
                static_cast<float>(img.bytes[static_cast<size_t>(y) * img.width + x]) / 255.0f;
    return f;
}

void write_features(const std::string& path, const Mat& rows) {
    if (rows.rows < 1 || rows.cols < 1)
        throw Error(ErrorCode::InvalidConfig, "feature matrix is empty");
    std::string out = "FEAT1";
    append_pod<std::uint32_t>(out, static_cast<std::uint32_t>(rows.rows));
    append_pod<std::uint32_t>(out, static_cast<std::uint32_t>(rows.cols));
    for (double v : rows.a) append_pod<float>(out, static_cast<float>(v));
    atomic_write(path, out);
}

Mat read_features(const std::string& path) {
    const std::string bytes = read_file(path);
    if (bytes.size() < 5 || std::memcmp(bytes.data(), "FEAT1", 5) != 0)
        return read_features_csv(path, bytes); // text fallback
    if (bytes.size() < 13)
        throw Error(ErrorCode::InvalidFormat, "truncated feature header: " + path);
    std::uint32_t count, dim;
    std::memcpy(&count, bytes.data() + 5, 4);
    std::memcpy(&dim, bytes.data() + 9, 4);
    if (count < 1 || dim < 1 || count > (1u << 24) || dim > (1u << 24))
        throw Error(ErrorCode::InvalidFormat, "implausible feature dimensions: " + path);
    const size_t expect = 13 + static_cast<size_t>(count) * dim * 4;
    if (bytes.size() != expect)
        throw Error(ErrorCode::InvalidFormat, "feature payload size mismatch: " + path);
    Mat rows(static_cast<int>(count), static_cast<int>(dim));
    for (size_t i = 0; i < rows.a.size(); ++i) {
        float v;
        std::memcpy(&v, bytes.data() + 13 + i * 4, 4);
        rows.a[i] = v;
    }
    return rows;
}

std::string parent_dir(const std::string& path) {
    const std::filesystem::path p(path);
    const std::string dir = p.parent_path().string();
    return dir.empty() ? "." : dir;
}

std::string join_path(const std::string& dir, const std::string& rel) {
    if (!rel.empty() && rel.front() == '/') return rel; // already absolute
    return (std::filesystem::path(dir) / rel).string();
}

Manifest load_manifest(const std::string& path, bool check_files) {
    json doc;
    try {
        doc = json::parse(read_file(path));
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        throw Error(ErrorCode::InvalidFormat, "manifest is not valid JSON: " + std::string(e.what()));
    }
    Manifest m;
    try {
        const json& session = doc.at("session");
        m.k_s = session.at("k_s").get<int>();
        m.width = session.at("width").get<int>();
        m.height = session.at("height").get<int>();
        m.seed = session.at("seed").get<std::uint64_t>();
        for (const json& fr : doc.at("frames")) {
            ManifestFrame f;
            f.index = fr.at("index").get<int>();
            f.mask = fr.value("mask", std::string());
            f.gray = fr.value("gray", std::string());
            if (fr.contains("feature")) f.feature = fr.at("feature").get<std::string>();
            if (fr.contains("gt_phase")) f.gt_phase = fr.at("gt_phase").get<int>();
            if (fr.contains("gt_theta")) f.gt_theta = fr.at("gt_theta").get<double>();
            m.frames.push_back(std::move(f));
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidFormat, "manifest schema error: " + std::string(e.what()));
    }
    if (m.k_s < 1 || m.width < 0 || m.height < 0)
        throw Error(ErrorCode::InvalidFormat, "manifest session metadata out of range");
    for (size_t i = 1; i < m.frames.size(); ++i)
        if (m.frames[i].index <= m.frames[i - 1].index)
            throw Error(ErrorCode::InvalidFormat, "manifest frame indices must increase");
    if (check_files) {
        const std::string dir = parent_dir(path);
        for (const ManifestFrame& f : m.frames) {
            for (const std::string* rel : {&f.mask, &f.gray, &f.feature}) {
                if (rel->empty()) continue;
                const std::string full = join_path(dir, *rel);
                if (!std::filesystem::exists(full))
                    throw Error(ErrorCode::IoFailure, "manifest references missing file: " + full);
            }
        }
    }
    return m;
}

void save_manifest(const Manifest& m, const std::string& path) {
    json doc;
    doc["session"] = {{"k_s", m.k_s}, {"width", m.width}, {"height", m.height}, {"seed", m.seed}};
    doc["frames"] = json::array();
    for (const ManifestFrame& f : m.frames) {
        json fr = {{"index", f.index}};
        if (!f.mask.empty()) fr["mask"] = f.mask;
        if (!f.gray.empty()) fr["gray"] = f.gray;
        if (!f.feature.empty()) fr["feature"] = f.feature;
        if (f.gt_phase) fr["gt_phase"] = *f.gt_phase;
        if (f.gt_theta) fr["gt_theta"] = *f.gt_theta;
        doc["frames"].push_back(std::move(fr));
    }
    atomic_write(path, doc.dump(2) + "\n");
}

} // namespace phaco::io
