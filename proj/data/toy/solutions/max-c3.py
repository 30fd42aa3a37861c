input()
print(-min(-v for v in map(int, input().split())))
