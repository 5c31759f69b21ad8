#define DOCTEST_CONFIG_IMPLEMENT
#include "doctest.h"

#include "gridad/io.hpp"

int main(int argc, char** argv) {
    gridad::io::keep_heap_resident();
    doctest::Context ctx;
    ctx.applyCommandLine(argc, argv);
    return ctx.run();
}
