#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "hydrocal/errors.hpp"

namespace hydrocal {

/// Grid cell address (row 0 is the northernmost row).
struct Cell {
    int row = 0, col = 0;
    bool operator==(const Cell&) const = default;
};

/**
 * Rectangular elevation raster with square cells. Elevations are stored
 * row-major, north row first. Cells equal to the nodata sentinel are
 * outside the modelled domain (ocean or missing data).
 */
struct DemGrid {
    int rows = 0, cols = 0;
    double cell_size = 0.0;   // m
    double nodata = -9999.0;
    std::vector<double> elevations;  // m, row-major

    DemGrid() = default;
    DemGrid(int r, int c, double cell, double fill = 0.0, double nd = -9999.0)
        : rows(r), cols(c), cell_size(cell), nodata(nd),
          elevations(size_t(r) * size_t(c), fill) {}

    size_t size() const { return elevations.size(); }
    int index(int r, int c) const { return r * cols + c; }
    int index(const Cell& cell) const { return index(cell.row, cell.col); }
    Cell cell_of(int idx) const { return {idx / cols, idx % cols}; }

    bool in_bounds(int r, int c) const {
        return r >= 0 && r < rows && c >= 0 && c < cols;
    }
    bool in_bounds(const Cell& cell) const { return in_bounds(cell.row, cell.col); }
    bool on_border(int r, int c) const {
        return r == 0 || c == 0 || r == rows - 1 || c == cols - 1;
    }

    double& at(int r, int c) { return elevations[index(r, c)]; }
    double at(int r, int c) const { return elevations[index(r, c)]; }

    bool is_nodata(int idx) const { return elevations[idx] == nodata; }
    bool is_nodata(int r, int c) const { return is_nodata(index(r, c)); }

    double area_km2_per_cell() const { return cell_size * cell_size / 1e6; }

    size_t count_valid() const {
        size_t n = 0;
        for (double e : elevations) n += e != nodata;
        return n;
    }

    void validate() const {
        if (rows < 1 || cols < 1) throw InvalidGrid("grid must be at least 1x1");
        if (!(cell_size > 0)) throw InvalidGrid("cell size must be positive");
        if (elevations.size() != size_t(rows) * size_t(cols))
            throw InvalidGrid("elevation array size mismatch");
        for (double e : elevations)
            if (e != nodata && !std::isfinite(e))
                throw InvalidGrid("non-finite elevation");
    }
};

/// Cells draining through a common outlet.
struct CatchmentMask {
    int rows = 0, cols = 0;
    std::vector<uint8_t> member;   // row-major membership flags
    Cell outlet;
    double area_km2 = 0.0;

    size_t cell_count() const {
        size_t n = 0;
        for (uint8_t m : member) n += m != 0;
        return n;
    }

    bool contains(int r, int c) const { return member[size_t(r) * cols + c] != 0; }
    bool contains(const Cell& cell) const { return contains(cell.row, cell.col); }

    /// Member count shared with another mask on the same grid.
    size_t overlap(const CatchmentMask& other) const {
        if (rows != other.rows || cols != other.cols)
            throw ShapeError("catchment masks live on different grids");
        size_t n = 0;
        for (size_t i = 0; i < member.size(); ++i) n += (member[i] && other.member[i]);
        return n;
    }
};

// ---------------------------------------------------------------------------
// ESRI ASCII grid I/O. Header keys: ncols, nrows, xllcorner, yllcorner,
// cellsize, NODATA_value. Values are row-major, north row first.
// ---------------------------------------------------------------------------

inline DemGrid read_esri_ascii(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    DemGrid g;
    double xll = 0, yll = 0;
    bool have_nodata = false;
    std::string key;
    // Header: first six lines of "key value"; NODATA_value is optional.
    for (int i = 0; i < 6; ++i) {
        const auto pos = in.tellg();
        if (!(in >> key)) throw IoError(path + ": truncated header");
        if (key == "ncols") in >> g.cols;
        else if (key == "nrows") in >> g.rows;
        else if (key == "xllcorner") in >> xll;
        else if (key == "yllcorner") in >> yll;
        else if (key == "cellsize") in >> g.cell_size;
        else if (key == "NODATA_value") { in >> g.nodata; have_nodata = true; }
        else { in.seekg(pos); break; }  // first data token
    }
    if (!have_nodata) g.nodata = -9999.0;
    if (g.rows < 1 || g.cols < 1) throw IoError(path + ": bad grid dimensions");
    g.elevations.resize(size_t(g.rows) * size_t(g.cols));
    for (double& e : g.elevations)
        if (!(in >> e)) throw IoError(path + ": truncated grid data");
    g.validate();
    return g;
}

inline void write_esri_ascii(const std::string& path, const DemGrid& g,
                             double xllcorner = 0.0, double yllcorner = 0.0) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "ncols " << g.cols << "\n"
        << "nrows " << g.rows << "\n"
        << "xllcorner " << xllcorner << "\n"
        << "yllcorner " << yllcorner << "\n"
        << "cellsize " << g.cell_size << "\n"
        << "NODATA_value " << g.nodata << "\n";
    out.precision(12);
    for (int r = 0; r < g.rows; ++r) {
        for (int c = 0; c < g.cols; ++c) {
            if (c) out << ' ';
            out << g.at(r, c);
        }
        out << '\n';
    }
}

// ---------------------------------------------------------------------------
// Cell-list CSV: header "row,col", one cell per line. Used for boundary
// masks and persisted catchment masks.
// ---------------------------------------------------------------------------

inline std::vector<Cell> read_cell_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::vector<Cell> cells;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#' || line.rfind("row", 0) == 0) continue;
        Cell c;
        if (std::sscanf(line.c_str(), "%d,%d", &c.row, &c.col) != 2)
            throw IoError(path + ": malformed cell row '" + line + "'");
        cells.push_back(c);
    }
    return cells;
}

inline void write_cell_csv(const std::string& path, const std::vector<Cell>& cells) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "row,col\n";
    for (const Cell& c : cells) out << c.row << ',' << c.col << '\n';
}

inline void write_mask_csv(const std::string& path, const CatchmentMask& mask) {
    std::vector<Cell> cells;
    for (int r = 0; r < mask.rows; ++r)
        for (int c = 0; c < mask.cols; ++c)
            if (mask.contains(r, c)) cells.push_back({r, c});
    write_cell_csv(path, cells);
}

}  // namespace hydrocal
