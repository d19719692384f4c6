#include "xrank/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "xrank/error.hpp"

namespace xrank::io {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingArtifact(path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void atomic_write(const std::filesystem::path& path, std::string_view bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot open for writing: " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) throw DataError("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::string digest(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string file_digest(const std::filesystem::path& path) { return digest(read_file(path)); }

void for_each_jsonl(const std::filesystem::path& path,
                    const std::function<void(std::size_t, const Json&)>& fn) {
    std::ifstream in(path);
    if (!in) throw MissingArtifact(path.string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        Json obj;
        try {
            obj = Json::parse(line);
        } catch (const Json::parse_error& e) {
            throw ParseError(path.string(), lineno, e.what());
        }
        try {
            fn(lineno, obj);
        } catch (const Json::exception& e) {
            throw ParseError(path.string(), lineno, e.what());
        } catch (const ParseError&) {
            throw;
        } catch (const DataError& e) {
            throw ParseError(path.string(), lineno, e.what());
        }
    }
}

std::string to_jsonl(const std::vector<Json>& rows) {
    std::string out;
    for (const auto& r : rows) {
        out += r.dump();
        out += '\n';
    }
    return out;
}

void put_u32(std::string& out, std::uint32_t v) {
    char b[4];
    std::memcpy(b, &v, 4);
    out.append(b, 4);
}

void put_u64(std::string& out, std::uint64_t v) {
    char b[8];
    std::memcpy(b, &v, 8);
    out.append(b, 8);
}

void put_i16(std::string& out, std::int16_t v) {
    char b[2];
    std::memcpy(b, &v, 2);
    out.append(b, 2);
}

void put_f64(std::string& out, double v) {
    char b[8];
    std::memcpy(b, &v, 8);
    out.append(b, 8);
}

std::uint32_t get_u32(std::string_view in, std::size_t pos) {
    std::uint32_t v;
    std::memcpy(&v, in.data() + pos, 4);
    return v;
}

std::uint64_t get_u64(std::string_view in, std::size_t pos) {
    std::uint64_t v;
    std::memcpy(&v, in.data() + pos, 8);
    return v;
}

std::int16_t get_i16(std::string_view in, std::size_t pos) {
    std::int16_t v;
    std::memcpy(&v, in.data() + pos, 2);
    return v;
}

double get_f64(std::string_view in, std::size_t pos) {
    double v;
    std::memcpy(&v, in.data() + pos, 8);
    return v;
}

void append_matrix(std::string& out, const Matrix& m) {
    out.append("XPRT", 4);
    put_u32(out, kMatrixVersion);
    put_u32(out, static_cast<std::uint32_t>(m.rows()));
    put_u32(out, static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) put_f64(out, m(i, j));
}

std::vector<Matrix> parse_matrices(std::string_view bytes, const std::string& name) {
    std::vector<Matrix> result;
    std::size_t pos = 0;
    while (pos < bytes.size()) {
        if (bytes.size() - pos < 16) throw DataError(name + ": truncated matrix header");
        if (bytes.substr(pos, 4) != "XPRT") throw DataError(name + ": bad matrix magic");
        if (get_u32(bytes, pos + 4) != kMatrixVersion)
            throw DataError(name + ": unsupported matrix version");
        const std::uint64_t rows = get_u32(bytes, pos + 8);
        const std::uint64_t cols = get_u32(bytes, pos + 12);
        pos += 16;
        if ((bytes.size() - pos) / 8 < rows * cols) throw DataError(name + ": truncated matrix body");
        Matrix m(rows, cols);
        for (std::uint64_t i = 0; i < rows; ++i)
            for (std::uint64_t j = 0; j < cols; ++j, pos += 8) m(i, j) = get_f64(bytes, pos);
        result.push_back(std::move(m));
    }
    return result;
}

void write_matrices(const std::filesystem::path& path, const std::vector<Matrix>& ms) {
    std::string out;
    for (const auto& m : ms) append_matrix(out, m);
    atomic_write(path, out);
}

std::vector<Matrix> read_matrices(const std::filesystem::path& path) {
    return parse_matrices(read_file(path), path.string());
}

}  // namespace xrank::io
