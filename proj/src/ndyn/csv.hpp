#pragma once

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "ndyn/errors.hpp"

namespace ndyn {

// CSV writing with locale-independent formatting: '.' decimal separator,
// comma field separator, LF line endings, shortest round-trip doubles.
class CsvWriter {
public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header)
      : out_(path, std::ios::binary) {
    if (!out_) fail(ErrCode::Config, "cannot open for writing: " + path);
    for (size_t i = 0; i < header.size(); ++i) {
      if (i) out_ << ',';
      out_ << header[i];
    }
    out_ << '\n';
  }

  static std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
  }

  void row(const std::vector<double>& vals) {
    for (size_t i = 0; i < vals.size(); ++i) {
      if (i) out_ << ',';
      out_ << fmt(vals[i]);
    }
    out_ << '\n';
  }

  void row_prefixed(long n, const std::vector<double>& vals) {
    out_ << n;
    for (double v : vals) out_ << ',' << fmt(v);
    out_ << '\n';
  }

private:
  std::ofstream out_;
};

}  // namespace ndyn
