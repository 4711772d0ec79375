#pragma once

#define LIDALIGN_VERSION "0.1.0"
