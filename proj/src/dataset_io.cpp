#include "forcekf/dataset_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "forcekf/errors.hpp"

namespace forcekf {

namespace fs = std::filesystem;

std::string format_double(double x) {
  char buf[40];
  const int n = std::snprintf(buf, sizeof(buf), "%.17g", x);
  return std::string(buf, static_cast<std::size_t>(n));
}

std::string csv::estimate_header() {
  std::string h = "t,qw,qx,qy,qz,px,py,pz,vx,vy,vz,bwx,bwy,bwz,bax,bay,baz,Fx,Fy,Fz";
  const char* blocks[] = {"th", "p", "v", "bw", "ba", "F"};
  for (const char* b : blocks) {
    for (const char* axis : {"x", "y", "z"}) h += std::string(",var_") + b + axis;
  }
  return h;
}

namespace {

class CsvReader {
 public:
  CsvReader(const fs::path& path, const std::string& expected_header) : path_(path), in_(path) {
    if (!in_) throw DataError("dataset_io", "cannot open " + path_.string());
    std::string header;
    if (!std::getline(in_, header)) throw DataError("dataset_io", where() + ": missing header row");
    ++line_;
    if (strip(header) != expected_header) {
      throw DataError("dataset_io", where() + ": expected header '" + expected_header + "'");
    }
    columns_ = 1 + static_cast<std::size_t>(std::count(expected_header.begin(), expected_header.end(), ','));
  }

  /// Next data row; false at end of file. Blank lines are errors.
  bool next(std::vector<double>& row) {
    std::string text;
    if (!std::getline(in_, text)) return false;
    ++line_;
    text = strip(text);
    row.clear();
    std::size_t start = 0;
    while (true) {
      const auto comma = text.find(',', start);
      const std::string_view field(text.data() + start,
                                   (comma == std::string::npos ? text.size() : comma) - start);
      double value = 0.0;
      const auto* first = field.data();
      const auto* last = field.data() + field.size();
      while (first < last && *first == ' ') ++first;
      while (last > first && *(last - 1) == ' ') --last;
      const auto [ptr, ec] = std::from_chars(first, last, value);
      if (ec != std::errc() || ptr != last || first == last) {
        throw DataError("dataset_io", where() + ": malformed value '" + std::string(field) + "'");
      }
      if (!std::isfinite(value)) throw DataError("dataset_io", where() + ": non-finite value");
      row.push_back(value);
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (row.size() != columns_) {
      throw DataError("dataset_io", where() + ": expected " + std::to_string(columns_) + " columns, got " +
                                        std::to_string(row.size()));
    }
    return true;
  }

  std::string where() const { return path_.filename().string() + ":" + std::to_string(line_); }

 private:
  static std::string strip(std::string s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.pop_back();
    return s;
  }

  fs::path path_;
  std::ifstream in_;
  std::size_t columns_ = 0;
  int line_ = 0;
};

void require_increasing(double prev, double t, bool first, const CsvReader& reader) {
  if (!first && !(t > prev)) {
    throw DataError("dataset_io", reader.where() + ": non-monotonic timestamp " + format_double(t));
  }
}

double stream_rate(std::size_t n, double t0, double t1) {
  return n > 1 && t1 > t0 ? static_cast<double>(n - 1) / (t1 - t0) : 0.0;
}

}  // namespace

DatasetStreams load_dataset(const fs::path& dir) {
  DatasetStreams s;
  std::vector<double> row;
  {
    CsvReader r(dir / "imu.csv", csv::kImuHeader);
    while (r.next(row)) {
      require_increasing(s.imu.empty() ? 0.0 : s.imu.back().t, row[0], s.imu.empty(), r);
      s.imu.push_back({row[0], Vec3(row[1], row[2], row[3]), Vec3(row[4], row[5], row[6])});
    }
    if (s.imu.size() < 2) throw DataError("dataset_io", "imu.csv: need at least two samples");
  }
  {
    CsvReader r(dir / "thrust.csv", csv::kThrustHeader);
    while (r.next(row)) {
      require_increasing(s.thrust.empty() ? 0.0 : s.thrust.back().t, row[0], s.thrust.empty(), r);
      s.thrust.push_back({row[0], Vec3(row[1], row[2], row[3])});
    }
    if (s.thrust.size() < 2) throw DataError("dataset_io", "thrust.csv: need at least two samples");
  }
  {
    CsvReader r(dir / "features.csv", csv::kFeaturesHeader);
    while (r.next(row)) {
      const double t = row[0];
      if (!s.frames.empty() && t < s.frames.back().t) {
        throw DataError("dataset_io", r.where() + ": non-monotonic timestamp " + format_double(t));
      }
      if (row[1] != std::floor(row[1])) throw DataError("dataset_io", r.where() + ": feature_id must be an integer");
      if (s.frames.empty() || t > s.frames.back().t) s.frames.push_back(CameraFrame{t, {}});
      s.frames.back().features.push_back({static_cast<std::int64_t>(row[1]), row[2], row[3]});
    }
  }
  if (fs::exists(dir / "groundtruth.csv")) {
    CsvReader r(dir / "groundtruth.csv", csv::kGroundTruthHeader);
    std::vector<GroundTruthSample> gt;
    while (r.next(row)) {
      require_increasing(gt.empty() ? 0.0 : gt.back().t, row[0], gt.empty(), r);
      GroundTruthSample g;
      g.t = row[0];
      try {
        g.q = UnitQuaternion::from_wxyz(row[1], row[2], row[3], row[4]);
      } catch (const Error&) {
        throw DataError("dataset_io", r.where() + ": quaternion is not unit norm");
      }
      g.p = Vec3(row[5], row[6], row[7]);
      g.v = Vec3(row[8], row[9], row[10]);
      g.force = Vec3(row[11], row[12], row[13]);
      gt.push_back(g);
    }
    s.groundtruth = std::move(gt);
  }

  const double imu_rate = stream_rate(s.imu.size(), s.imu.front().t, s.imu.back().t);
  const double thrust_rate = stream_rate(s.thrust.size(), s.thrust.front().t, s.thrust.back().t);
  if (std::abs(thrust_rate - imu_rate) > 0.05 * imu_rate) {
    throw DataError("dataset_io", "thrust rate " + format_double(thrust_rate) + " Hz differs from IMU rate " +
                                      format_double(imu_rate) + " Hz by more than 5%");
  }
  return s;
}

namespace {

std::ofstream open_for_write(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("dataset_io", "cannot write " + path.string());
  return out;
}

void put(std::ostream& os, std::initializer_list<double> values) {
  bool first = true;
  for (double v : values) {
    if (!first) os << ',';
    os << format_double(v);
    first = false;
  }
}

void put_vec(std::ostream& os, const Vec3& v) {
  os << ',' << format_double(v.x()) << ',' << format_double(v.y()) << ',' << format_double(v.z());
}

}  // namespace

void write_dataset(const fs::path& dir, const DatasetStreams& s) {
  fs::create_directories(dir);
  {
    auto out = open_for_write(dir / "imu.csv");
    out << csv::kImuHeader << '\n';
    for (const auto& m : s.imu) {
      put(out, {m.t});
      put_vec(out, m.omega);
      put_vec(out, m.accel);
      out << '\n';
    }
  }
  {
    auto out = open_for_write(dir / "thrust.csv");
    out << csv::kThrustHeader << '\n';
    for (const auto& m : s.thrust) {
      put(out, {m.t});
      put_vec(out, m.thrust);
      out << '\n';
    }
  }
  {
    auto out = open_for_write(dir / "features.csv");
    out << csv::kFeaturesHeader << '\n';
    for (const auto& f : s.frames) {
      for (const auto& o : f.features) {
        out << format_double(f.t) << ',' << o.id << ',' << format_double(o.u) << ',' << format_double(o.v) << '\n';
      }
    }
  }
  const fs::path gt_path = dir / "groundtruth.csv";
  if (s.groundtruth) {
    auto out = open_for_write(gt_path);
    out << csv::kGroundTruthHeader << '\n';
    for (const auto& g : *s.groundtruth) {
      put(out, {g.t, g.q.w(), g.q.x(), g.q.y(), g.q.z()});
      put_vec(out, g.p);
      put_vec(out, g.v);
      put_vec(out, g.force);
      out << '\n';
    }
  } else if (fs::exists(gt_path)) {
    fs::remove(gt_path);
  }
}

void write_states(const fs::path& path, std::span<const EstimateSample> samples) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  auto out = open_for_write(path);
  out << csv::estimate_header() << '\n';
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (i > 0 && !(s.t > samples[i - 1].t)) {
      throw DataError("dataset_io", "write_states: timestamps must increase strictly");
    }
    put(out, {s.t, s.x.q.w(), s.x.q.x(), s.x.q.y(), s.x.q.z()});
    put_vec(out, s.x.p);
    put_vec(out, s.x.v);
    put_vec(out, s.x.bg);
    put_vec(out, s.x.ba);
    put_vec(out, s.x.force);
    for (int k = 0; k < 18; ++k) out << ',' << format_double(s.P(k, k));
    out << '\n';
  }
  if (!out) throw DataError("dataset_io", "I/O failure writing " + path.string());
}

std::vector<EstimateSample> read_states(const fs::path& path) {
  CsvReader r(path, csv::estimate_header());
  std::vector<EstimateSample> out;
  std::vector<double> row;
  while (r.next(row)) {
    EstimateSample s;
    s.t = row[0];
    require_increasing(out.empty() ? 0.0 : out.back().t, s.t, out.empty(), r);
    try {
      s.x.q = UnitQuaternion::from_wxyz(row[1], row[2], row[3], row[4]);
    } catch (const Error&) {
      throw DataError("dataset_io", r.where() + ": quaternion is not unit norm");
    }
    s.x.p = Vec3(row[5], row[6], row[7]);
    s.x.v = Vec3(row[8], row[9], row[10]);
    s.x.bg = Vec3(row[11], row[12], row[13]);
    s.x.ba = Vec3(row[14], row[15], row[16]);
    s.x.force = Vec3(row[17], row[18], row[19]);
    for (int k = 0; k < 18; ++k) s.P(k, k) = row[20 + k];
    out.push_back(s);
  }
  return out;
}

}  // namespace forcekf
