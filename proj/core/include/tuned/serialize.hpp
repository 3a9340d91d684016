#pragma once

#include <filesystem>

#include "tuned/errors.hpp"
#include "tuned/model.hpp"

namespace tuned::pipeline {

/// File written by a different format version.
class VersionError : public Error {
 public:
  using Error::Error;
};

/// Truncated, altered or otherwise unreadable model file.
class CorruptFileError : public Error {
 public:
  using Error::Error;
};

/// Binary model file, little-endian, fields in this order:
///
///   magic      8 bytes  "TUNEDv1\n"
///   length     u64      payload byte count
///   payload:
///     seed, epochs_run, num_classes, num_views        u64 each
///     view dims                                       u64 x num_views
///     config entry count, then key/value strings      (u64 length + bytes)
///     parameter count, then tensors                   (u64 rows, u64 cols, f64 x rows*cols)
///       in ModelBundle::parameters() order
///     training rows per view                          tensors as above
///   checksum   u64      FNV-1a over the payload
///
/// The neighbour graphs are rebuilt from the stored training rows on load.
void save_model(const ModelBundle& model, const std::filesystem::path& path);
ModelBundle load_model(const std::filesystem::path& path);

}  // namespace tuned::pipeline
