#include "afotad/io.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "afotad/errors.hpp"

namespace afotad {

namespace {

using nlohmann::json;

void write_bytes(std::ofstream& out, const void* data, std::size_t len) {
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(len));
}

void read_bytes(std::ifstream& in, void* data, std::size_t len, const std::string& what) {
  in.read(static_cast<char*>(data), static_cast<std::streamsize>(len));
  if (!in) throw DataError("truncated read while loading " + what);
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open for reading: " + path.string());
  return in;
}

}  // namespace

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::uint64_t fnv1a64(const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string file_checksum(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    const auto got = in.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ull;
    }
  }
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

const Tensor* ParamContainer::find(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return &t;
  }
  return nullptr;
}

void write_param_container(const std::filesystem::path& path, const ParamContainer& container) {
  json manifest;
  manifest["tensors"] = json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, tensor] : container.tensors) {
    manifest["tensors"].push_back(
        {{"name", name}, {"shape", tensor.shape()}, {"offset", offset}});
    offset += static_cast<std::uint64_t>(tensor.size()) * sizeof(double);
  }
  manifest["extra"] =
      container.extra_json.empty() ? json::object() : json::parse(container.extra_json);
  const std::string text = manifest.dump();

  std::ofstream out = open_out(path);
  const char magic[4] = {'A', 'F', 'P', 'C'};
  const std::uint32_t version = 1;
  const std::uint64_t manifest_len = text.size();
  write_bytes(out, magic, 4);
  write_bytes(out, &version, sizeof(version));
  write_bytes(out, &manifest_len, sizeof(manifest_len));
  write_bytes(out, text.data(), text.size());
  for (const auto& [name, tensor] : container.tensors) {
    write_bytes(out, tensor.data(), static_cast<std::size_t>(tensor.size()) * sizeof(double));
  }
  if (!out) throw DataError("failed writing parameter container: " + path.string());
}

ParamContainer read_param_container(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  char magic[4];
  std::uint32_t version = 0;
  std::uint64_t manifest_len = 0;
  read_bytes(in, magic, 4, path.string());
  if (std::memcmp(magic, "AFPC", 4) != 0) {
    throw DataError("not a parameter container (bad magic): " + path.string());
  }
  read_bytes(in, &version, sizeof(version), path.string());
  if (version != 1) {
    throw DataError("unsupported container version " + std::to_string(version) + ": " +
                    path.string());
  }
  read_bytes(in, &manifest_len, sizeof(manifest_len), path.string());
  std::string text(manifest_len, '\0');
  read_bytes(in, text.data(), manifest_len, path.string());

  json manifest;
  try {
    manifest = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError("corrupt container manifest in " + path.string() + ": " + e.what());
  }

  ParamContainer container;
  container.extra_json = manifest.value("extra", json::object()).dump();
  for (const auto& entry : manifest.at("tensors")) {
    const std::string name = entry.at("name").get<std::string>();
    const std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
    std::int64_t n = 1;
    for (int d : shape) n *= d;
    std::vector<double> values(static_cast<size_t>(n));
    read_bytes(in, values.data(), static_cast<std::size_t>(n) * sizeof(double),
               path.string() + " tensor " + name);
    container.tensors.emplace_back(name, Tensor::from_data(shape, std::move(values)));
  }
  return container;
}

void write_feature_file(const std::filesystem::path& path, const FeatureFile& file) {
  if (file.features.rank() != 2 || file.features.dim(0) != file.channels) {
    throw std::invalid_argument("feature tensor shape " + shape_to_string(file.features.shape()) +
                                " disagrees with channel count " + std::to_string(file.channels));
  }
  std::ofstream out = open_out(path);
  const char magic[4] = {'A', 'F', 'T', 'F'};
  const std::uint32_t version = 1;
  const std::uint32_t channels = static_cast<std::uint32_t>(file.channels);
  const std::uint32_t steps = static_cast<std::uint32_t>(file.features.dim(1));
  const std::uint32_t stride = static_cast<std::uint32_t>(file.stride);
  const std::uint64_t frames = static_cast<std::uint64_t>(file.frames);
  write_bytes(out, magic, 4);
  write_bytes(out, &version, sizeof(version));
  write_bytes(out, &channels, sizeof(channels));
  write_bytes(out, &steps, sizeof(steps));
  write_bytes(out, &stride, sizeof(stride));
  write_bytes(out, &file.fps, sizeof(file.fps));
  write_bytes(out, &frames, sizeof(frames));
  write_bytes(out, file.features.data(),
              static_cast<std::size_t>(file.features.size()) * sizeof(double));
  if (!out) throw DataError("failed writing feature file: " + path.string());
}

FeatureFile read_feature_file(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  char magic[4];
  std::uint32_t version = 0, channels = 0, steps = 0, stride = 0;
  std::uint64_t frames = 0;
  FeatureFile file;
  read_bytes(in, magic, 4, path.string());
  if (std::memcmp(magic, "AFTF", 4) != 0) {
    throw DataError("not a feature file (bad magic): " + path.string());
  }
  read_bytes(in, &version, sizeof(version), path.string());
  if (version != 1) {
    throw DataError("unsupported feature file version " + std::to_string(version) + ": " +
                    path.string());
  }
  read_bytes(in, &channels, sizeof(channels), path.string());
  read_bytes(in, &steps, sizeof(steps), path.string());
  read_bytes(in, &stride, sizeof(stride), path.string());
  read_bytes(in, &file.fps, sizeof(file.fps), path.string());
  read_bytes(in, &frames, sizeof(frames), path.string());
  std::vector<double> values(static_cast<size_t>(channels) * steps);
  read_bytes(in, values.data(), values.size() * sizeof(double), path.string());
  file.channels = static_cast<int>(channels);
  file.stride = static_cast<int>(stride);
  file.frames = static_cast<std::int64_t>(frames);
  file.features = Tensor::from_data({static_cast<int>(channels), static_cast<int>(steps)},
                                    std::move(values));
  return file;
}

std::string format_annotation_line(const AnnotationRecord& r) {
  return "{\"video\":\"" + r.video + "\",\"class\":" + std::to_string(r.cls) +
         ",\"start_s\":" + fixed6(r.start_s) + ",\"end_s\":" + fixed6(r.end_s) + "}";
}

std::string format_detection_line(const DetectionRecord& r) {
  return "{\"video\":\"" + r.video + "\",\"class\":" + std::to_string(r.cls) +
         ",\"score\":" + fixed6(r.score) + ",\"start_s\":" + fixed6(r.start_s) +
         ",\"end_s\":" + fixed6(r.end_s) + "}";
}

namespace {

template <typename Record, typename Formatter>
void write_jsonl(const std::filesystem::path& path, const std::vector<Record>& records,
                 Formatter fmt) {
  std::ofstream out = open_out(path);
  for (const auto& r : records) out << fmt(r) << "\n";
  if (!out) throw DataError("failed writing " + path.string());
}

json parse_line(const std::string& line, const std::filesystem::path& path, std::size_t lineno) {
  try {
    return json::parse(line);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ":" + std::to_string(lineno) + ": bad JSON: " + e.what());
  }
}

}  // namespace

void write_annotations(const std::filesystem::path& path,
                       const std::vector<AnnotationRecord>& rs) {
  write_jsonl(path, rs, format_annotation_line);
}

std::vector<AnnotationRecord> read_annotations(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  std::vector<AnnotationRecord> records;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const json j = parse_line(line, path, lineno);
    try {
      records.push_back({j.at("video").get<std::string>(), j.at("class").get<int>(),
                         j.at("start_s").get<double>(), j.at("end_s").get<double>()});
    } catch (const json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return records;
}

void write_detections(const std::filesystem::path& path, const std::vector<DetectionRecord>& rs) {
  write_jsonl(path, rs, format_detection_line);
}

std::vector<DetectionRecord> read_detections(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  std::vector<DetectionRecord> records;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const json j = parse_line(line, path, lineno);
    try {
      records.push_back({j.at("video").get<std::string>(), j.at("class").get<int>(),
                         j.at("score").get<double>(), j.at("start_s").get<double>(),
                         j.at("end_s").get<double>()});
    } catch (const json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return records;
}

}  // namespace afotad
