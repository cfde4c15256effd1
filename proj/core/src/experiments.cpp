// placeholder, filled after core compiles
