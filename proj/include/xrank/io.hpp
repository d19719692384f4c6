#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

namespace xrank {

using Json = nlohmann::json;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

namespace io {

std::string read_file(const std::filesystem::path& path);

// Writes to "<path>.tmp" and renames over the final path, so readers never
// observe a partially written artifact.
void atomic_write(const std::filesystem::path& path, std::string_view bytes);

// 64-bit FNV-1a, rendered as 16 hex digits.
std::string digest(std::string_view bytes);
std::string file_digest(const std::filesystem::path& path);

// Calls fn(line_number, parsed_object) for every non-blank line. Parse
// failures surface as ParseError naming the file and the 1-based line.
void for_each_jsonl(const std::filesystem::path& path,
                    const std::function<void(std::size_t, const Json&)>& fn);

std::string to_jsonl(const std::vector<Json>& rows);

// Binary matrix block: magic "XPRT", u32 version, u32 rows, u32 cols, then
// rows*cols little-endian float64 in row-major order. Files may hold
// several consecutive blocks.
inline constexpr std::uint32_t kMatrixVersion = 1;

void append_matrix(std::string& out, const Matrix& m);
std::vector<Matrix> parse_matrices(std::string_view bytes, const std::string& name);

void write_matrices(const std::filesystem::path& path, const std::vector<Matrix>& ms);
std::vector<Matrix> read_matrices(const std::filesystem::path& path);

// Little-endian primitive packing shared by the binary formats.
void put_u32(std::string& out, std::uint32_t v);
void put_u64(std::string& out, std::uint64_t v);
void put_i16(std::string& out, std::int16_t v);
void put_f64(std::string& out, double v);
std::uint32_t get_u32(std::string_view in, std::size_t pos);
std::uint64_t get_u64(std::string_view in, std::size_t pos);
std::int16_t get_i16(std::string_view in, std::size_t pos);
double get_f64(std::string_view in, std::size_t pos);

}  // namespace io
}  // namespace xrank
