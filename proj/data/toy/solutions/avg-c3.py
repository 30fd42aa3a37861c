import statistics
input()
print(statistics.fmean(map(int, input().split())))
