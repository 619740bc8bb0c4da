#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "forcekf/dataset.hpp"

namespace forcekf {

/// Column layouts of the CSV files. Header rows are mandatory.
namespace csv {
inline constexpr const char* kImuHeader = "t,wx,wy,wz,ax,ay,az";
inline constexpr const char* kThrustHeader = "t,Tx,Ty,Tz";
inline constexpr const char* kFeaturesHeader = "t,feature_id,u,v";
inline constexpr const char* kGroundTruthHeader = "t,qw,qx,qy,qz,px,py,pz,vx,vy,vz,Fx,Fy,Fz";
/// 38 columns: t, quaternion, 5 vector blocks, 18 covariance diagonal terms.
std::string estimate_header();
inline constexpr int kEstimateColumns = 38;
}  // namespace csv

/// Reads imu.csv, thrust.csv, features.csv and the optional groundtruth.csv
/// from `dir`. Any malformed row, non-finite value or out-of-order timestamp
/// raises DataError naming the file and line.
DatasetStreams load_dataset(const std::filesystem::path& dir);

/// Writes the streams in the layout read by load_dataset, with 17
/// significant digits so that loading back is exact.
void write_dataset(const std::filesystem::path& dir, const DatasetStreams& streams);

/// estimate.csv writer; rows must have strictly increasing timestamps.
void write_states(const std::filesystem::path& path, std::span<const EstimateSample> samples);

/// Reads estimate.csv back. The covariance of each sample is diagonal.
std::vector<EstimateSample> read_states(const std::filesystem::path& path);

/// Shortest-exact decimal rendering used by every writer (17 significant
/// digits).
std::string format_double(double x);

}  // namespace forcekf
