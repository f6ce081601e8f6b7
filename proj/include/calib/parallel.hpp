#pragma once

#include <cstddef>
#include <exception>
#include <string>
#include <vector>

#include "calib/error.hpp"

namespace calib {

enum class Execution { Parallel, Serial };

/// Runs fn(i) for every cell index. Cells must write only to their own
/// output slots. The first failing cell (lowest index) is rethrown as an
/// ExperimentError naming the cell, so parallel and serial runs fail the same
/// way.
template <class Fn>
void for_each_cell(std::size_t count, Execution exec, Fn&& fn)
{
    std::vector<std::exception_ptr> failures(count);
    if (exec == Execution::Parallel) {
#pragma omp parallel for schedule(dynamic)
        for (std::size_t i = 0; i < count; ++i) {
            try {
                fn(i);
            } catch (...) {
                failures[i] = std::current_exception();
            }
        }
    } else {
        for (std::size_t i = 0; i < count; ++i) {
            try {
                fn(i);
            } catch (...) {
                failures[i] = std::current_exception();
            }
        }
    }
    for (std::size_t i = 0; i < count; ++i) {
        if (!failures[i])
            continue;
        try {
            std::rethrow_exception(failures[i]);
        } catch (const std::exception& e) {
            throw ExperimentError("cell " + std::to_string(i) + ": " + e.what());
        }
    }
}

}  // namespace calib
