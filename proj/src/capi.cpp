#include <algorithm>
#include <cstring>
#include <new>
#include <string>

#include "baselines.hpp"
#include "config.hpp"
#include "ensemble.hpp"
#include "error.hpp"
#include "pipeline.hpp"
#include "regiongcn/regiongcn.h"

struct rgcn_config {
  rgcn::Json doc;
};

namespace {

thread_local std::string last_error;

rgcn_status status_of(rgcn::ErrorKind kind) {
  switch (kind) {
    case rgcn::ErrorKind::InvalidArgument:
      return RGCN_INVALID_ARGUMENT;
    case rgcn::ErrorKind::DimensionMismatch:
      return RGCN_DIMENSION_MISMATCH;
    case rgcn::ErrorKind::Io:
      return RGCN_IO_ERROR;
    case rgcn::ErrorKind::Parse:
      return RGCN_PARSE_ERROR;
    case rgcn::ErrorKind::Numeric:
      return RGCN_NUMERIC_ERROR;
  }
  return RGCN_INTERNAL_ERROR;
}

template <typename F>
rgcn_status guarded(F&& body) {
  try {
    body();
    last_error.clear();
    return RGCN_OK;
  } catch (const rgcn::Error& e) {
    last_error = e.what();
    return status_of(e.kind());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
  } catch (const std::exception& e) {
    last_error = e.what();
  } catch (...) {
    last_error = "unknown error";
  }
  return RGCN_INTERNAL_ERROR;
}

void require(bool ok, const char* what) {
  if (!ok) throw rgcn::invalid_argument(what);
}

char* copy_string(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

}  // namespace

extern "C" {

const char* rgcn_version(void) { return "0.1.0"; }

const char* rgcn_last_error(void) { return last_error.c_str(); }

rgcn_status rgcn_config_new(rgcn_config** out) {
  return guarded([&] {
    require(out, "null output pointer");
    *out = new rgcn_config{rgcn::default_config()};
  });
}

rgcn_status rgcn_config_load(const char* path, rgcn_config** out) {
  return guarded([&] {
    require(path && out, "null argument");
    *out = new rgcn_config{rgcn::load_config(path)};
  });
}

rgcn_status rgcn_config_from_json(const char* text, rgcn_config** out) {
  return guarded([&] {
    require(text && out, "null argument");
    *out = new rgcn_config{rgcn::parse_config(text)};
  });
}

rgcn_status rgcn_config_set(rgcn_config* cfg, const char* assignment) {
  return guarded([&] {
    require(cfg && assignment, "null argument");
    rgcn::apply_override(cfg->doc, assignment);
  });
}

rgcn_status rgcn_config_to_json(const rgcn_config* cfg, char** out) {
  return guarded([&] {
    require(cfg && out, "null argument");
    *out = copy_string(cfg->doc.dump(2));
  });
}

void rgcn_config_free(rgcn_config* cfg) { delete cfg; }

void rgcn_string_free(char* s) { delete[] s; }

rgcn_status rgcn_run(const char* command, const rgcn_config* cfg, const char* out_dir,
                     char** report_json) {
  return guarded([&] {
    require(command && cfg && out_dir, "null argument");
    const rgcn::Json report = rgcn::run_command(command, cfg->doc, out_dir);
    if (report_json) *report_json = copy_string(report.dump(2));
  });
}

rgcn_status rgcn_nmi(const size_t* a, const size_t* b, size_t n, double* out) {
  return guarded([&] {
    require(a && b && out, "null argument");
    require(n > 0, "empty allocation");
    auto convert = [n](const size_t* src) {
      std::vector<std::size_t> labels(src, src + n);
      for (auto& l : labels) {
        if (l == 0) throw rgcn::invalid_argument("region labels are one-based");
        --l;
      }
      const std::size_t p = *std::max_element(labels.begin(), labels.end()) + 1;
      return rgcn::Allocation(std::move(labels), p);
    };
    *out = rgcn::nmi(convert(a), convert(b));
  });
}

rgcn_status rgcn_eval_metrics(const double* y_true, const double* y_pred, size_t n, double* rmse,
                              double* mae, double* r2) {
  return guarded([&] {
    require(y_true && y_pred && rmse && mae && r2, "null argument");
    const auto m = rgcn::eval_metrics({y_true, n}, {y_pred, n});
    *rmse = m.rmse;
    *mae = m.mae;
    *r2 = m.r2;
  });
}

}  // extern "C"
