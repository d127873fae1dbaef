// Copyright 2026 The tds authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef TDS_PARALLEL_HPP
#define TDS_PARALLEL_HPP

#include <exception>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace tds {

// Runs body(i) for i in [begin, end). threads <= 1 takes the plain serial
// loop, which is the reference implementation the tests compare the OpenMP
// path against. Bodies must only write state owned by index i; random draws
// are counter-addressed, so both paths produce identical bits. An exception
// thrown by a body is captured and rethrown after the loop joins (OpenMP
// regions must not leak exceptions).
template <typename Body>
void parallel_for(int begin, int end, int threads, Body&& body) {
#ifdef _OPENMP
  if (threads > 1) {
    std::exception_ptr err;
#pragma omp parallel for schedule(static) num_threads(threads)
    for (int i = begin; i < end; ++i) {
      try {
        body(i);
      } catch (...) {
#pragma omp critical(tds_parallel_for_err)
        {
          if (!err) err = std::current_exception();
        }
      }
    }
    if (err) std::rethrow_exception(err);
    return;
  }
#endif
  (void)threads;
  for (int i = begin; i < end; ++i) body(i);
}

inline int hardware_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace tds

#endif  // TDS_PARALLEL_HPP
