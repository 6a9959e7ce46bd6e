#pragma once

#include <stdexcept>
#include <string>

namespace soupsr {

/// Base class for every error raised by this library.
struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct io_error : error { using error::error; };            // unreadable / unwritable files
struct format_error : error { using error::error; };        // malformed headers or containers
struct unsupported_error : error { using error::error; };   // valid file, feature out of scope
struct data_error : error { using error::error; };          // NaN/inf voxels, bad payloads
struct dimension_error : error { using error::error; };     // input too small for an operation
struct shape_error : error { using error::error; };         // mismatched array shapes
struct scale_range_error : error { using error::error; };   // sampling factor outside the covered range
struct index_error : error { using error::error; };         // out-of-range element access
struct config_error : error { using error::error; };        // inconsistent or empty configuration
struct corruption_error : error { using error::error; };    // damaged checkpoint or archive
struct numerical_error : error { using error::error; };     // non-finite values during compute
struct insufficient_data_error : error { using error::error; };

} // namespace soupsr
