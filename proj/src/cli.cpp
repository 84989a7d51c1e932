namespace ratsyn {}
