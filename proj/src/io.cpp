#include "dml/io.hpp"

#include "dml/error.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <unistd.h>

namespace dml::io {

using nlohmann::json;

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xffu));
}

std::uint32_t get_u32(const std::string& in, std::size_t at) {
  std::uint32_t v = 0;
  for (int b = 0; b < 4; ++b)
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + b])) << (8 * b);
  return v;
}

}  // namespace

std::string encode_features(const Matrix& m) {
  if (m.rows() > 0xffffffffLL || m.cols() > 0xffffffffLL)
    throw ShapeError("feature file: matrix too large");
  std::string out(kFeatureMagic, 4);
  put_u32(out, static_cast<std::uint32_t>(m.rows()));
  put_u32(out, static_cast<std::uint32_t>(m.cols()));
  out.reserve(out.size() + 4 * static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(m(i, j))));
  return out;
}

Matrix decode_features(const std::string& bytes) {
  if (bytes.size() < 4) throw LoadError("feature file: truncated magic", bytes.size());
  if (std::memcmp(bytes.data(), kFeatureMagic, 4) != 0)
    throw LoadError("feature file: bad magic (expected \"EMB1\")", 0);
  if (bytes.size() < 12)
    throw LoadError("feature file: truncated header, expected 12 bytes, got " +
                        std::to_string(bytes.size()),
                    bytes.size());
  const std::uint64_t rows = get_u32(bytes, 4), cols = get_u32(bytes, 8);
  const std::uint64_t expected = 4 * rows * cols;
  const std::uint64_t actual = bytes.size() - 12;
  if (actual != expected)
    throw LoadError("feature file: payload has " + std::to_string(actual) +
                        " bytes, expected " + std::to_string(expected),
                    12 + std::min(actual, expected));
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  std::size_t at = 12;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j, at += 4) {
      const float v = std::bit_cast<float>(get_u32(bytes, at));
      if (!std::isfinite(v))
        throw LoadError("feature file: non-finite value at byte offset " + std::to_string(at), at);
      m(i, j) = v;
    }
  return m;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string(), 0);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_atomic(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw LoadError("cannot write " + tmp.string(), 0);
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) {
      std::filesystem::remove(tmp);
      throw LoadError("write failed for " + tmp.string(), 0);
    }
  }
  std::filesystem::rename(tmp, path);
}

Matrix read_features(const std::filesystem::path& path) {
  try {
    return decode_features(read_file(path));
  } catch (const LoadError& e) {
    throw LoadError(path.string() + ": " + e.what(), e.where());
  }
}

void write_features(const std::filesystem::path& path, const Matrix& m) {
  write_atomic(path, encode_features(m));
}

Labels parse_labels(const std::string& text) {
  Labels out;
  std::size_t line_no = 0, pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    ++line_no;
    std::string_view line(text.data() + pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    long long v = -1;
    const auto [ptr, ec] = std::from_chars(line.data(), line.data() + line.size(), v);
    if (line.empty() || ec != std::errc() || ptr != line.data() + line.size() || v < 0 ||
        v > std::numeric_limits<int>::max())
      throw LoadError("labels: line " + std::to_string(line_no) +
                          " is not a nonnegative integer",
                      line_no);
    out.push_back(static_cast<int>(v));
    pos = end + 1;
  }
  return out;
}

std::string format_labels(const Labels& labels) {
  std::string out;
  for (int y : labels) {
    if (y < 0) throw ShapeError("labels must be nonnegative");
    out += std::to_string(y);
    out += '\n';
  }
  return out;
}

Labels read_labels(const std::filesystem::path& path, std::optional<Eigen::Index> expected_rows) {
  Labels labels;
  try {
    labels = parse_labels(read_file(path));
  } catch (const LoadError& e) {
    throw LoadError(path.string() + ": " + e.what(), e.where());
  }
  if (expected_rows && static_cast<Eigen::Index>(labels.size()) != *expected_rows)
    throw LoadError(path.string() + ": " + std::to_string(labels.size()) +
                        " labels for " + std::to_string(*expected_rows) + " feature rows",
                    labels.size() + 1);
  return labels;
}

void write_labels(const std::filesystem::path& path, const Labels& labels) {
  write_atomic(path, format_labels(labels));
}

namespace {

std::vector<std::int64_t> index_list(const json& j, const char* key, std::size_t record) {
  if (!j.contains(key)) return {};
  const json& v = j.at(key);
  if (!v.is_array())
    throw LoadError("ground truth record " + std::to_string(record) + ": '" + key +
                        "' must be a list",
                    record + 1);
  std::vector<std::int64_t> out;
  for (const auto& e : v) {
    if (!e.is_number_integer())
      throw LoadError("ground truth record " + std::to_string(record) + ": '" + key +
                          "' holds a non-integer",
                      record + 1);
    out.push_back(e.get<std::int64_t>());
  }
  return out;
}

}  // namespace

std::vector<GroundTruthRecord> parse_ground_truth(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw LoadError(std::string("ground truth: invalid JSON: ") + e.what(), e.byte);
  }
  if (!j.is_array()) throw LoadError("ground truth: top level must be a list", 0);
  std::vector<GroundTruthRecord> out;
  std::size_t r = 0;
  for (const auto& rec : j) {
    if (!rec.is_object() || !rec.contains("query_index") ||
        !rec.at("query_index").is_number_integer())
      throw LoadError("ground truth record " + std::to_string(r) +
                          ": needs an integer query_index",
                      r + 1);
    for (const auto& [key, value] : rec.items()) {
      (void)value;
      if (key != "query_index" && key != "easy" && key != "hard" && key != "junk")
        throw LoadError("ground truth record " + std::to_string(r) + ": unknown key '" + key + "'",
                        r + 1);
    }
    GroundTruthRecord g;
    g.query_index = rec.at("query_index").get<std::int64_t>();
    g.gt.easy = index_list(rec, "easy", r);
    g.gt.hard = index_list(rec, "hard", r);
    g.gt.junk = index_list(rec, "junk", r);
    out.push_back(std::move(g));
    ++r;
  }
  return out;
}

std::string format_ground_truth(const std::vector<GroundTruthRecord>& records) {
  json j = json::array();
  for (const auto& r : records)
    j.push_back({{"query_index", r.query_index},
                 {"easy", r.gt.easy},
                 {"hard", r.gt.hard},
                 {"junk", r.gt.junk}});
  return dump_canonical(j);
}

std::vector<GroundTruthRecord> read_ground_truth(const std::filesystem::path& path) {
  try {
    return parse_ground_truth(read_file(path));
  } catch (const LoadError& e) {
    throw LoadError(path.string() + ": " + e.what(), e.where());
  }
}

void write_ground_truth(const std::filesystem::path& path,
                        const std::vector<GroundTruthRecord>& records) {
  write_atomic(path, format_ground_truth(records));
}

std::string dump_canonical(const json& j) { return j.dump(2) + "\n"; }

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string format_csv(const CsvTable& table) {
  std::string out;
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    if (c) out += ',';
    out += table.header[c];
  }
  out += '\n';
  for (const auto& row : table.rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out += ',';
      out += format_double(row[c]);
    }
    out += '\n';
  }
  return out;
}

CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::vector<std::string> cells;
    std::size_t pos = 0;
    while (true) {
      const std::size_t comma = line.find(',', pos);
      cells.push_back(line.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (line_no == 1) {
      t.header = std::move(cells);
      continue;
    }
    std::vector<double> row;
    for (const auto& c : cells) {
      double v = 0.0;
      if (c == "nan") v = std::numeric_limits<double>::quiet_NaN();
      else if (c == "inf") v = std::numeric_limits<double>::infinity();
      else if (c == "-inf") v = -std::numeric_limits<double>::infinity();
      else {
        const auto [ptr, ec] = std::from_chars(c.data(), c.data() + c.size(), v);
        if (ec != std::errc() || ptr != c.data() + c.size())
          throw LoadError("csv: bad number '" + c + "' on line " + std::to_string(line_no), line_no);
      }
      row.push_back(v);
    }
    if (row.size() != t.header.size())
      throw LoadError("csv: line " + std::to_string(line_no) + " has wrong column count", line_no);
    t.rows.push_back(std::move(row));
  }
  return t;
}

namespace {

json matrix_json(const Matrix& m) {
  std::vector<double> flat(m.data(), m.data() + m.size());
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", flat}};
}

Matrix matrix_from(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto flat = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(flat.size()) != rows * cols)
    throw LoadError("model: matrix data length mismatch", 0);
  Matrix m(rows, cols);
  std::copy(flat.begin(), flat.end(), m.data());
  return m;
}

json vector_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector vector_from(const json& j) {
  const auto flat = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(flat.data(), static_cast<Eigen::Index>(flat.size()));
}

}  // namespace

json head_to_json(const EncoderHead& head) {
  const auto& s = head.spec();
  json j = {{"in_dim", s.in_dim}, {"hidden", s.hidden}, {"out_dim", s.out_dim},
            {"w1", matrix_json(head.w1)}, {"b1", vector_json(head.b1)}};
  if (s.hidden > 0) {
    j["w2"] = matrix_json(head.w2);
    j["b2"] = vector_json(head.b2);
  }
  return j;
}

EncoderHead head_from_json(const json& j) {
  try {
    EncoderHead head(HeadSpec{j.at("in_dim").get<Eigen::Index>(), j.at("hidden").get<Eigen::Index>(),
                              j.at("out_dim").get<Eigen::Index>()});
    auto load = [](Matrix& dst, const json& src) {
      Matrix m = matrix_from(src);
      if (m.rows() != dst.rows() || m.cols() != dst.cols())
        throw LoadError("model: weight shape does not match head spec", 0);
      dst = std::move(m);
    };
    auto load_vec = [](Vector& dst, const json& src) {
      Vector v = vector_from(src);
      if (v.size() != dst.size()) throw LoadError("model: bias length does not match head spec", 0);
      dst = std::move(v);
    };
    load(head.w1, j.at("w1"));
    load_vec(head.b1, j.at("b1"));
    if (head.spec().hidden > 0) {
      load(head.w2, j.at("w2"));
      load_vec(head.b2, j.at("b2"));
    }
    return head;
  } catch (const json::exception& e) {
    throw LoadError(std::string("model: malformed head: ") + e.what(), 0);
  }
}

json pca_to_json(const PcaModel& pca) {
  return {{"mean", vector_json(pca.mean)},
          {"components", matrix_json(pca.components)},
          {"eigenvalues", vector_json(pca.eigenvalues)}};
}

PcaModel pca_from_json(const json& j) {
  try {
    PcaModel p;
    p.mean = vector_from(j.at("mean"));
    p.components = matrix_from(j.at("components"));
    p.eigenvalues = vector_from(j.at("eigenvalues"));
    if (p.components.cols() != p.mean.size() || p.eigenvalues.size() != p.components.rows())
      throw LoadError("model: inconsistent PCA shapes", 0);
    return p;
  } catch (const json::exception& e) {
    throw LoadError(std::string("model: malformed PCA: ") + e.what(), 0);
  }
}

}  // namespace dml::io
