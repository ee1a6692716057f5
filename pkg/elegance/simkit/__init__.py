# synthetic corpus generation
